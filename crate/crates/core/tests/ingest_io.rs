//! Reader/writer bookkeeping at realistic trace sizes.

use std::fmt::Write as _;
use std::net::IpAddr;

use biscale_core::ingest::{
    read_csv, read_pcap, write_csv, write_pcap_with, PcapMagic, Protocol,
};
use biscale_core::{FiveTuple, PacketRecord};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tmp(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("biscale-ingest-io");
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn random_records(n: usize, seed: u64) -> Vec<PacketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0f64;
    (0..n)
        .map(|_| {
            t += rng.random::<f64>() * 0.002;
            PacketRecord {
                timestamp: t,
                // The pcap writer synthesizes Ethernet/IP/UDP headers, so
                // sizes must cover them.
                size: rng.random_range(64..1500),
                flow_key: FiveTuple {
                    src_ip: IpAddr::from([10, 0, rng.random::<u8>(), rng.random::<u8>()]),
                    dst_ip: IpAddr::from([192, 168, 0, rng.random::<u8>()]),
                    src_port: rng.random_range(1024..60000),
                    dst_port: 443,
                    protocol: Protocol::Udp,
                },
                tcp_meta: None,
            }
        })
        .collect()
}

#[test]
fn million_row_csv_accounts_for_every_row() {
    let n_good = 1_000_000usize;
    let bad_every = 5000usize; // 200 malformed rows woven in
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut body = String::with_capacity(64 * (n_good + n_good / bad_every));
    body.push_str("timestamp,size,src_ip,dst_ip,src_port,dst_port,proto\n");
    let mut t = 0.0f64;
    let mut bad = 0usize;
    for i in 0..n_good {
        t += rng.random::<f64>() * 0.001;
        writeln!(
            body,
            "{t},{},10.0.{}.{},192.0.2.7,{},443,udp",
            rng.random_range(40..1500u32),
            rng.random::<u8>(),
            rng.random::<u8>(),
            rng.random_range(1024..60000u16),
        )
        .unwrap();
        if i % bad_every == bad_every - 1 {
            // Same timestamp neighborhood, garbage size field.
            writeln!(body, "{t},not-a-size,10.0.0.1,192.0.2.7,5000,443,udp").unwrap();
            bad += 1;
        }
    }
    let path = tmp("million.csv");
    std::fs::write(&path, &body).unwrap();

    let out = read_csv(&path, true).unwrap();
    assert_eq!(out.records.len(), n_good, "every well-formed row ingested");
    assert_eq!(out.stats.parse_failures as usize, bad, "every bad row counted");
    assert_eq!(
        out.records.len() + out.stats.parse_failures as usize,
        n_good + bad,
        "no row unaccounted for"
    );
    // Timestamps are rebased to the first packet and nondecreasing.
    assert_eq!(out.records[0].timestamp, 0.0);
    assert!(out
        .records
        .windows(2)
        .all(|w| w[0].timestamp <= w[1].timestamp));

    // Strict mode refuses the same file.
    assert!(read_csv(&path, false).is_err());
    std::fs::remove_file(&path).unwrap();
}

#[test]
fn large_pcap_round_trips_through_every_magic() {
    let records = random_records(100_000, 9);
    for (magic, res) in [
        (PcapMagic::MicrosLe, 1e-6),
        (PcapMagic::MicrosBe, 1e-6),
        (PcapMagic::NanosLe, 1e-9),
        (PcapMagic::NanosBe, 1e-9),
    ] {
        let path = tmp(&format!("big-{magic:?}.pcap"));
        write_pcap_with(&path, &records, magic).unwrap();
        let out = read_pcap(&path, None).unwrap();
        assert_eq!(out.records.len(), records.len());
        assert_eq!(out.stats.parse_failures, 0);
        for (got, want) in out.records.iter().zip(&records) {
            assert_eq!(got.flow_key, want.flow_key);
            assert_eq!(got.size, want.size);
            // Quantized to the capture resolution, rebased to the first
            // packet; drift stays within one tick either side.
            let want_t = want.timestamp - records[0].timestamp;
            assert!(
                (got.timestamp - want_t).abs() <= 2.0 * res,
                "{magic:?}: {} vs {want_t}",
                got.timestamp
            );
        }
        std::fs::remove_file(&path).unwrap();
    }
}

#[test]
fn csv_and_pcap_agree_on_the_same_trace() {
    let records = random_records(20_000, 31);
    let csv_path = tmp("agree.csv");
    let pcap_path = tmp("agree.pcap");
    write_csv(&csv_path, &records).unwrap();
    write_pcap_with(&pcap_path, &records, PcapMagic::NanosLe).unwrap();
    let a = read_csv(&csv_path, false).unwrap().records;
    let b = read_pcap(&pcap_path, None).unwrap().records;
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.flow_key, y.flow_key);
        assert_eq!(x.size, y.size);
        assert!((x.timestamp - y.timestamp).abs() <= 2e-9);
    }
    std::fs::remove_file(&csv_path).unwrap();
    std::fs::remove_file(&pcap_path).unwrap();
}
