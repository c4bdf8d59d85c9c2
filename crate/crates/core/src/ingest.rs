//! Packet trace readers: pcap savefiles and plain timestamp CSV.
//!
//! Both readers emit the same normalized records: timestamps rebased so the
//! first packet sits at t = 0, sizes in bytes, a 5-tuple flow key, and TCP
//! header fields when the packet is TCP. Clock jitter up to 1 ms backward
//! is clamped to the previous timestamp; anything larger is treated as a
//! corrupt trace. Per-packet parse failures are counted, not fatal; only a
//! bad global header or an unsupported link type aborts the read.

use std::fs;
use std::io::Write as _;
use std::net::{IpAddr, Ipv4Addr};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest backward timestamp slip absorbed silently, in seconds.
pub const MAX_BACKWARD_SLIP: f64 = 0.001;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a pcap savefile (magic 0x{magic:08x})")]
    MalformedHeader { magic: u32 },
    #[error("unsupported link type {0}; only Ethernet and raw IP captures are readable")]
    UnsupportedLinkType(u32),
    #[error("row {line}: {reason}")]
    RowParse { line: u64, reason: String },
    #[error("record {index}: timestamp runs backward by {backward_s} s, past the 1 ms jitter allowance")]
    TimestampRegression { index: u64, backward_s: f64 },
    #[error("record {index}: {reason}")]
    InvalidRecord { index: u64, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    Tcp,
    Udp,
    Icmp,
    Other(u8),
}

impl Protocol {
    pub fn from_ip_number(n: u8) -> Protocol {
        match n {
            6 => Protocol::Tcp,
            17 => Protocol::Udp,
            1 | 58 => Protocol::Icmp,
            other => Protocol::Other(other),
        }
    }

    pub fn ip_number(self) -> u8 {
        match self {
            Protocol::Tcp => 6,
            Protocol::Udp => 17,
            Protocol::Icmp => 1,
            Protocol::Other(n) => n,
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Protocol::Tcp => write!(f, "TCP"),
            Protocol::Udp => write!(f, "UDP"),
            Protocol::Icmp => write!(f, "ICMP"),
            Protocol::Other(n) => write!(f, "{n}"),
        }
    }
}

/// Flow identity. Ports are 0 for ICMP and unknown protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FiveTuple {
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
}

fn ip_bytes16(ip: IpAddr) -> [u8; 16] {
    match ip {
        IpAddr::V4(a) => a.to_ipv6_mapped().octets(),
        IpAddr::V6(a) => a.octets(),
    }
}

impl FiveTuple {
    pub fn v4(
        src: [u8; 4],
        src_port: u16,
        dst: [u8; 4],
        dst_port: u16,
        protocol: Protocol,
    ) -> FiveTuple {
        FiveTuple {
            src_ip: IpAddr::V4(Ipv4Addr::from(src)),
            dst_ip: IpAddr::V4(Ipv4Addr::from(dst)),
            src_port,
            dst_port,
            protocol,
        }
    }

    /// Hash-key bytes for the source address; v4 addresses are embedded as
    /// v4-mapped v6 so mixed traces hash through one table set.
    pub fn src_key_bytes(&self) -> [u8; 16] {
        ip_bytes16(self.src_ip)
    }

    pub fn dst_key_bytes(&self) -> [u8; 16] {
        ip_bytes16(self.dst_ip)
    }

    pub fn pair_key_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        out[..16].copy_from_slice(&ip_bytes16(self.src_ip));
        out[16..].copy_from_slice(&ip_bytes16(self.dst_ip));
        out
    }

    /// Key with source and destination endpoints swapped.
    pub fn reversed(&self) -> FiveTuple {
        FiveTuple {
            src_ip: self.dst_ip,
            dst_ip: self.src_ip,
            src_port: self.dst_port,
            dst_port: self.src_port,
            protocol: self.protocol,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcpFlags {
    pub syn: bool,
    pub ack: bool,
    pub fin: bool,
    pub rst: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TcpMeta {
    pub seq: u32,
    pub ack: u32,
    pub flags: TcpFlags,
    pub payload_len: u32,
    /// Filled by the RTT pass, not by the readers.
    pub is_retransmission: bool,
}

/// One packet: relative timestamp, wire size, flow key, TCP detail.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    /// Seconds since trace start.
    pub timestamp: f64,
    /// Original wire length in bytes.
    pub size: u32,
    pub flow_key: FiveTuple,
    /// Present exactly when `flow_key.protocol` is TCP.
    pub tcp_meta: Option<TcpMeta>,
}

/// Non-fatal parse bookkeeping from a reader pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    /// Per-packet/row parse failures skipped.
    pub parse_failures: u64,
    /// Truncated trailing records dropped.
    pub truncated: u64,
    /// Timestamps clamped for sub-millisecond backward jitter.
    pub clamped: u64,
}

impl IngestStats {
    pub fn warnings(&self) -> u64 {
        self.parse_failures + self.truncated + self.clamped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadOutcome {
    pub records: Vec<PacketRecord>,
    pub stats: IngestStats,
}

/// pcap global-header magics, read little-endian from the file.
const MAGIC_US_LE: u32 = 0xa1b2c3d4;
const MAGIC_US_BE: u32 = 0xd4c3b2a1;
const MAGIC_NS_LE: u32 = 0xa1b23c4d;
const MAGIC_NS_BE: u32 = 0x4d3cb2a1;

#[derive(Clone, Copy)]
struct PcapFormat {
    big_endian: bool,
    nanos: bool,
}

impl PcapFormat {
    fn u32(&self, b: &[u8]) -> u32 {
        let arr: [u8; 4] = b[..4].try_into().unwrap();
        if self.big_endian {
            u32::from_be_bytes(arr)
        } else {
            u32::from_le_bytes(arr)
        }
    }

    fn timestamp(&self, sec: u32, frac: u32) -> f64 {
        let denom = if self.nanos { 1e9 } else { 1e6 };
        sec as f64 + frac as f64 / denom
    }
}

const LINKTYPE_ETHERNET: u32 = 1;
const LINKTYPE_RAW: u32 = 101;
const LINKTYPE_IPV4: u32 = 228;
const LINKTYPE_IPV6: u32 = 229;

/// Read a pcap savefile into packet records.
///
/// `filter` keeps only packets of one protocol. Truncated trailing records
/// and per-packet parse failures are counted in the outcome stats rather
/// than aborting.
pub fn read_pcap(
    path: impl AsRef<Path>,
    filter: Option<Protocol>,
) -> Result<ReadOutcome, IngestError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 {
        return Err(IngestError::MalformedHeader {
            magic: bytes
                .get(..4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .unwrap_or(0),
        });
    }
    let magic = u32::from_le_bytes(bytes[..4].try_into().unwrap());
    let fmt = match magic {
        MAGIC_US_LE => PcapFormat { big_endian: false, nanos: false },
        MAGIC_NS_LE => PcapFormat { big_endian: false, nanos: true },
        MAGIC_US_BE => PcapFormat { big_endian: true, nanos: false },
        MAGIC_NS_BE => PcapFormat { big_endian: true, nanos: true },
        other => return Err(IngestError::MalformedHeader { magic: other }),
    };
    let linktype = fmt.u32(&bytes[20..24]);
    if ![LINKTYPE_ETHERNET, LINKTYPE_RAW, LINKTYPE_IPV4, LINKTYPE_IPV6].contains(&linktype) {
        return Err(IngestError::UnsupportedLinkType(linktype));
    }

    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    let mut t0: Option<f64> = None;
    let mut prev = 0.0f64;
    let mut index = 0u64;
    let mut pos = 24usize;
    while pos < bytes.len() {
        if bytes.len() - pos < 16 {
            stats.truncated += 1;
            break;
        }
        let ts_sec = fmt.u32(&bytes[pos..]);
        let ts_frac = fmt.u32(&bytes[pos + 4..]);
        let incl_len = fmt.u32(&bytes[pos + 8..]) as usize;
        let orig_len = fmt.u32(&bytes[pos + 12..]);
        pos += 16;
        if bytes.len() - pos < incl_len {
            stats.truncated += 1;
            break;
        }
        let frame = &bytes[pos..pos + incl_len];
        pos += incl_len;
        index += 1;

        let raw_t = fmt.timestamp(ts_sec, ts_frac);
        let parsed = match linktype {
            LINKTYPE_ETHERNET => parse_ethernet(frame),
            _ => parse_ip(frame),
        };
        let (flow_key, tcp_meta) = match parsed {
            Some(p) => p,
            None => {
                stats.parse_failures += 1;
                continue;
            }
        };
        if orig_len == 0 {
            stats.parse_failures += 1;
            continue;
        }
        let t0 = *t0.get_or_insert(raw_t);
        let mut t = raw_t - t0;
        if t < prev {
            let backward = prev - t;
            if backward <= MAX_BACKWARD_SLIP {
                t = prev;
                stats.clamped += 1;
            } else {
                return Err(IngestError::TimestampRegression {
                    index,
                    backward_s: backward,
                });
            }
        }
        prev = t;
        if let Some(want) = filter {
            if flow_key.protocol != want {
                continue;
            }
        }
        records.push(PacketRecord {
            timestamp: t,
            size: orig_len,
            flow_key,
            tcp_meta,
        });
    }
    Ok(ReadOutcome { records, stats })
}

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88a8;

fn parse_ethernet(frame: &[u8]) -> Option<(FiveTuple, Option<TcpMeta>)> {
    if frame.len() < 14 {
        return None;
    }
    let mut offset = 12;
    let mut ethertype = u16::from_be_bytes([frame[offset], frame[offset + 1]]);
    offset += 2;
    while ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
        if frame.len() < offset + 4 {
            return None;
        }
        ethertype = u16::from_be_bytes([frame[offset + 2], frame[offset + 3]]);
        offset += 4;
    }
    match ethertype {
        ETHERTYPE_IPV4 | ETHERTYPE_IPV6 => parse_ip(&frame[offset..]),
        _ => None,
    }
}

fn parse_ip(packet: &[u8]) -> Option<(FiveTuple, Option<TcpMeta>)> {
    match packet.first()? >> 4 {
        4 => parse_ipv4(packet),
        6 => parse_ipv6(packet),
        _ => None,
    }
}

fn parse_ipv4(p: &[u8]) -> Option<(FiveTuple, Option<TcpMeta>)> {
    if p.len() < 20 {
        return None;
    }
    let ihl = ((p[0] & 0x0f) as usize) * 4;
    if ihl < 20 || p.len() < ihl {
        return None;
    }
    let total_len = u16::from_be_bytes([p[2], p[3]]) as usize;
    let protocol = Protocol::from_ip_number(p[9]);
    let src_ip = IpAddr::V4(Ipv4Addr::new(p[12], p[13], p[14], p[15]));
    let dst_ip = IpAddr::V4(Ipv4Addr::new(p[16], p[17], p[18], p[19]));
    let transport = &p[ihl..];
    let payload_budget = total_len.saturating_sub(ihl);
    finish_transport(src_ip, dst_ip, protocol, transport, payload_budget)
}

fn parse_ipv6(p: &[u8]) -> Option<(FiveTuple, Option<TcpMeta>)> {
    if p.len() < 40 {
        return None;
    }
    let payload_len = u16::from_be_bytes([p[4], p[5]]) as usize;
    let protocol = Protocol::from_ip_number(p[6]);
    let src: [u8; 16] = p[8..24].try_into().unwrap();
    let dst: [u8; 16] = p[24..40].try_into().unwrap();
    finish_transport(
        IpAddr::from(src),
        IpAddr::from(dst),
        protocol,
        &p[40..],
        payload_len,
    )
}

fn finish_transport(
    src_ip: IpAddr,
    dst_ip: IpAddr,
    protocol: Protocol,
    transport: &[u8],
    payload_budget: usize,
) -> Option<(FiveTuple, Option<TcpMeta>)> {
    let (src_port, dst_port, tcp_meta) = match protocol {
        Protocol::Tcp => {
            if transport.len() < 20 {
                return None;
            }
            let doff = ((transport[12] >> 4) as usize) * 4;
            if doff < 20 {
                return None;
            }
            let flags = TcpFlags {
                fin: transport[13] & 0x01 != 0,
                syn: transport[13] & 0x02 != 0,
                rst: transport[13] & 0x04 != 0,
                ack: transport[13] & 0x10 != 0,
            };
            let meta = TcpMeta {
                seq: u32::from_be_bytes(transport[4..8].try_into().unwrap()),
                ack: u32::from_be_bytes(transport[8..12].try_into().unwrap()),
                flags,
                payload_len: payload_budget.saturating_sub(doff) as u32,
                is_retransmission: false,
            };
            (
                u16::from_be_bytes([transport[0], transport[1]]),
                u16::from_be_bytes([transport[2], transport[3]]),
                Some(meta),
            )
        }
        Protocol::Udp => {
            if transport.len() < 8 {
                return None;
            }
            (
                u16::from_be_bytes([transport[0], transport[1]]),
                u16::from_be_bytes([transport[2], transport[3]]),
                None,
            )
        }
        Protocol::Icmp | Protocol::Other(_) => (0, 0, None),
    };
    Some((
        FiveTuple {
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            protocol,
        },
        tcp_meta,
    ))
}

/// Read the timestamp CSV format:
/// `timestamp,size,src_ip,dst_ip,src_port,dst_port,proto` with a header
/// row, optionally extended by `seq,ack,flags,payload_len` for TCP rows
/// (flags as a string over S/A/F/R).
///
/// With `lenient` set, rows that fail to parse (including out-of-order
/// timestamps) are skipped and counted; otherwise the first bad row is a
/// fatal error carrying its line number.
pub fn read_csv(path: impl AsRef<Path>, lenient: bool) -> Result<ReadOutcome, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path.as_ref())
        .map_err(|e| csv_error(0, e))?;
    {
        let headers = rdr.headers().map_err(|e| csv_error(1, e))?;
        let expect = ["timestamp", "size", "src_ip", "dst_ip", "src_port", "dst_port", "proto"];
        let got: Vec<String> = headers
            .iter()
            .take(7)
            .map(|h| h.trim().to_ascii_lowercase())
            .collect();
        if got != expect {
            return Err(IngestError::RowParse {
                line: 1,
                reason: format!("header must start with {expect:?}, got {got:?}"),
            });
        }
    }

    let mut stats = IngestStats::default();
    let mut records = Vec::new();
    let mut t0: Option<f64> = None;
    let mut prev = 0.0f64;
    for row in rdr.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                if lenient {
                    stats.parse_failures += 1;
                    continue;
                }
                return Err(csv_error(0, e));
            }
        };
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        match parse_csv_row(&row, line) {
            Ok((raw_t, mut rec)) => {
                let t0 = *t0.get_or_insert(raw_t);
                let mut t = raw_t - t0;
                if t < prev {
                    let backward = prev - t;
                    if backward <= MAX_BACKWARD_SLIP {
                        t = prev;
                        stats.clamped += 1;
                    } else if lenient {
                        stats.parse_failures += 1;
                        continue;
                    } else {
                        return Err(IngestError::RowParse {
                            line,
                            reason: format!("timestamp runs backward by {backward} s"),
                        });
                    }
                }
                prev = t;
                rec.timestamp = t;
                records.push(rec);
            }
            Err(e) => {
                if lenient {
                    stats.parse_failures += 1;
                } else {
                    return Err(e);
                }
            }
        }
    }
    Ok(ReadOutcome { records, stats })
}

fn csv_error(line: u64, e: csv::Error) -> IngestError {
    let line = match e.position() {
        Some(p) => p.line(),
        None => line,
    };
    IngestError::RowParse {
        line,
        reason: e.to_string(),
    }
}

fn parse_csv_row(
    row: &csv::StringRecord,
    line: u64,
) -> Result<(f64, PacketRecord), IngestError> {
    let field = |i: usize, name: &str| -> Result<&str, IngestError> {
        row.get(i).map(str::trim).ok_or_else(|| IngestError::RowParse {
            line,
            reason: format!("missing column {name}"),
        })
    };
    let bad = |name: &str, v: &str| IngestError::RowParse {
        line,
        reason: format!("bad {name}: {v:?}"),
    };

    let ts: f64 = field(0, "timestamp")?
        .parse()
        .map_err(|_| bad("timestamp", field(0, "timestamp").unwrap()))?;
    if !ts.is_finite() || ts < 0.0 {
        return Err(bad("timestamp", field(0, "timestamp")?));
    }
    let size: u32 = field(1, "size")?.parse().map_err(|_| bad("size", field(1, "size").unwrap()))?;
    if size == 0 {
        return Err(bad("size", "0"));
    }
    let src_ip: IpAddr = field(2, "src_ip")?.parse().map_err(|_| bad("src_ip", field(2, "src_ip").unwrap()))?;
    let dst_ip: IpAddr = field(3, "dst_ip")?.parse().map_err(|_| bad("dst_ip", field(3, "dst_ip").unwrap()))?;
    let src_port: u16 = field(4, "src_port")?.parse().map_err(|_| bad("src_port", field(4, "src_port").unwrap()))?;
    let dst_port: u16 = field(5, "dst_port")?.parse().map_err(|_| bad("dst_port", field(5, "dst_port").unwrap()))?;
    let proto_s = field(6, "proto")?;
    let protocol = match proto_s.to_ascii_uppercase().as_str() {
        "TCP" => Protocol::Tcp,
        "UDP" => Protocol::Udp,
        "ICMP" => Protocol::Icmp,
        other => match other.parse::<u8>() {
            Ok(n) => Protocol::from_ip_number(n),
            Err(_) => return Err(bad("proto", proto_s)),
        },
    };

    let tcp_meta = if protocol == Protocol::Tcp {
        match row.get(7).map(str::trim).filter(|s| !s.is_empty()) {
            Some(seq_s) => {
                let seq: u32 = seq_s.parse().map_err(|_| bad("seq", seq_s))?;
                let ack_s = field(8, "ack")?;
                let ack: u32 = ack_s.parse().map_err(|_| bad("ack", ack_s))?;
                let flags_s = field(9, "flags")?;
                let mut flags = TcpFlags::default();
                for c in flags_s.chars() {
                    match c.to_ascii_uppercase() {
                        'S' => flags.syn = true,
                        'A' => flags.ack = true,
                        'F' => flags.fin = true,
                        'R' => flags.rst = true,
                        other => return Err(bad("flags", &other.to_string())),
                    }
                }
                let pl_s = field(10, "payload_len")?;
                let payload_len: u32 = pl_s.parse().map_err(|_| bad("payload_len", pl_s))?;
                Some(TcpMeta {
                    seq,
                    ack,
                    flags,
                    payload_len,
                    is_retransmission: false,
                })
            }
            None => None,
        }
    } else {
        None
    };

    Ok((
        ts,
        PacketRecord {
            timestamp: ts,
            size,
            flow_key: FiveTuple {
                src_ip,
                dst_ip,
                src_port,
                dst_port,
                protocol,
            },
            tcp_meta,
        },
    ))
}

/// Write records in the CSV format `read_csv` accepts. TCP columns are
/// emitted when any record carries tcp_meta.
pub fn write_csv(path: impl AsRef<Path>, records: &[PacketRecord]) -> Result<(), IngestError> {
    let with_tcp = records.iter().any(|r| r.tcp_meta.is_some());
    let mut out = String::new();
    out.push_str("timestamp,size,src_ip,dst_ip,src_port,dst_port,proto");
    if with_tcp {
        out.push_str(",seq,ack,flags,payload_len");
    }
    out.push('\n');
    for r in records {
        let k = &r.flow_key;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}",
            r.timestamp, r.size, k.src_ip, k.dst_ip, k.src_port, k.dst_port, k.protocol
        ));
        if with_tcp {
            match &r.tcp_meta {
                Some(m) => {
                    let mut fl = String::new();
                    if m.flags.syn {
                        fl.push('S');
                    }
                    if m.flags.ack {
                        fl.push('A');
                    }
                    if m.flags.fin {
                        fl.push('F');
                    }
                    if m.flags.rst {
                        fl.push('R');
                    }
                    out.push_str(&format!(",{},{},{},{}", m.seq, m.ack, fl, m.payload_len));
                }
                None => out.push_str(",,,,"),
            }
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Magic selector for the fixture writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcapMagic {
    MicrosLe,
    MicrosBe,
    NanosLe,
    NanosBe,
}

fn header_len(key: &FiveTuple) -> usize {
    let ip = match key.src_ip {
        IpAddr::V4(_) => 20,
        IpAddr::V6(_) => 40,
    };
    let transport = match key.protocol {
        Protocol::Tcp => 20,
        Protocol::Udp => 8,
        Protocol::Icmp => 8,
        Protocol::Other(_) => 0,
    };
    14 + ip + transport
}

/// Smallest wire size `write_pcap` accepts for a record with this key.
pub fn min_frame_size(key: &FiveTuple) -> u32 {
    header_len(key) as u32
}

/// Write records as an Ethernet pcap savefile. The frame is synthesized
/// from the flow key and tcp_meta with a zero-filled payload so that the
/// wire length equals `record.size`; reading the file back yields the same
/// records field-for-field (timestamps on the chosen resolution grid).
pub fn write_pcap(path: impl AsRef<Path>, records: &[PacketRecord]) -> Result<(), IngestError> {
    write_pcap_with(path, records, PcapMagic::MicrosLe)
}

pub fn write_pcap_with(
    path: impl AsRef<Path>,
    records: &[PacketRecord],
    magic: PcapMagic,
) -> Result<(), IngestError> {
    // canonical magic, written in the file's own byte order; a reader
    // scanning little-endian sees the byte-swapped value on BE files
    let (magic_word, nanos, be) = match magic {
        PcapMagic::MicrosLe => (MAGIC_US_LE, false, false),
        PcapMagic::MicrosBe => (MAGIC_US_LE, false, true),
        PcapMagic::NanosLe => (MAGIC_NS_LE, true, false),
        PcapMagic::NanosBe => (MAGIC_NS_LE, true, true),
    };
    let mut bytes: Vec<u8> = Vec::with_capacity(24 + records.len() * 80);
    let put32 = |bytes: &mut Vec<u8>, v: u32| {
        if be {
            bytes.extend_from_slice(&v.to_be_bytes());
        } else {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    };
    let put16 = |bytes: &mut Vec<u8>, v: u16| {
        if be {
            bytes.extend_from_slice(&v.to_be_bytes());
        } else {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    };
    put32(&mut bytes, magic_word);
    put16(&mut bytes, 2);
    put16(&mut bytes, 4);
    put32(&mut bytes, 0);
    put32(&mut bytes, 0);
    put32(&mut bytes, 65535);
    put32(&mut bytes, LINKTYPE_ETHERNET);

    for (i, r) in records.iter().enumerate() {
        let frame = build_frame(r).map_err(|reason| IngestError::InvalidRecord {
            index: i as u64 + 1,
            reason,
        })?;
        let denom: f64 = if nanos { 1e9 } else { 1e6 };
        let mut sec = r.timestamp.floor() as u32;
        let mut frac = ((r.timestamp - sec as f64) * denom).round() as u32;
        if frac as f64 >= denom {
            sec += 1;
            frac = 0;
        }
        put32(&mut bytes, sec);
        put32(&mut bytes, frac);
        put32(&mut bytes, frame.len() as u32);
        put32(&mut bytes, r.size);
        bytes.extend_from_slice(&frame);
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn build_frame(r: &PacketRecord) -> Result<Vec<u8>, String> {
    let key = &r.flow_key;
    let hlen = header_len(key);
    if (r.size as usize) < hlen {
        return Err(format!(
            "size {} below the {} bytes of synthesized headers",
            r.size, hlen
        ));
    }
    let payload = r.size as usize - hlen;
    if let Some(m) = &r.tcp_meta {
        if m.payload_len as usize != payload {
            return Err(format!(
                "tcp payload_len {} inconsistent with size {} ({} after headers)",
                m.payload_len, r.size, payload
            ));
        }
    }
    let mut f = Vec::with_capacity(r.size as usize);
    f.extend_from_slice(&[0u8; 12]); // MACs
    let v4 = matches!(key.src_ip, IpAddr::V4(_));
    f.extend_from_slice(&if v4 { ETHERTYPE_IPV4 } else { ETHERTYPE_IPV6 }.to_be_bytes());

    let transport_len = hlen - 14 - if v4 { 20 } else { 40 } + payload;
    match (key.src_ip, key.dst_ip) {
        (IpAddr::V4(s), IpAddr::V4(d)) => {
            let total = 20 + transport_len;
            f.push(0x45);
            f.push(0);
            f.extend_from_slice(&(total as u16).to_be_bytes());
            f.extend_from_slice(&[0, 0, 0, 0]); // id, flags/frag
            f.push(64);
            f.push(key.protocol.ip_number());
            f.extend_from_slice(&[0, 0]); // checksum unvalidated
            f.extend_from_slice(&s.octets());
            f.extend_from_slice(&d.octets());
        }
        (IpAddr::V6(s), IpAddr::V6(d)) => {
            f.extend_from_slice(&0x6000_0000u32.to_be_bytes());
            f.extend_from_slice(&(transport_len as u16).to_be_bytes());
            f.push(key.protocol.ip_number());
            f.push(64);
            f.extend_from_slice(&s.octets());
            f.extend_from_slice(&d.octets());
        }
        _ => return Err("mixed v4/v6 endpoints in one flow key".into()),
    }

    match key.protocol {
        Protocol::Tcp => {
            let m = r.tcp_meta.as_ref().ok_or("TCP record without tcp_meta")?;
            f.extend_from_slice(&key.src_port.to_be_bytes());
            f.extend_from_slice(&key.dst_port.to_be_bytes());
            f.extend_from_slice(&m.seq.to_be_bytes());
            f.extend_from_slice(&m.ack.to_be_bytes());
            f.push(5 << 4);
            let mut fl = 0u8;
            if m.flags.fin {
                fl |= 0x01;
            }
            if m.flags.syn {
                fl |= 0x02;
            }
            if m.flags.rst {
                fl |= 0x04;
            }
            if m.flags.ack {
                fl |= 0x10;
            }
            f.push(fl);
            f.extend_from_slice(&0xffffu16.to_be_bytes());
            f.extend_from_slice(&[0, 0, 0, 0]); // checksum, urgent
        }
        Protocol::Udp => {
            f.extend_from_slice(&key.src_port.to_be_bytes());
            f.extend_from_slice(&key.dst_port.to_be_bytes());
            f.extend_from_slice(&((8 + payload) as u16).to_be_bytes());
            f.extend_from_slice(&[0, 0]);
        }
        Protocol::Icmp => {
            f.extend_from_slice(&[8, 0, 0, 0, 0, 0, 0, 0]); // echo request
        }
        Protocol::Other(_) => {}
    }
    f.resize(r.size as usize, 0);
    Ok(f)
}
