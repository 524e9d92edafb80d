//! Synthetic workload generators shared by the criterion benchmarks.

use std::collections::BTreeMap;
use std::net::IpAddr;

use rhino_core::ingest::{FlowRecord, TcpFlag, Transport};

fn ip(v: u32) -> IpAddr {
    IpAddr::from([10, (v >> 16) as u8, (v >> 8) as u8, v as u8])
}

/// Deterministic mixed-key record stream shaped like flattened scan plus
/// service traffic.
pub fn synthetic_records(n: usize) -> Vec<FlowRecord> {
    (0..n)
        .map(|i| {
            let i = i as u32;
            let mut tcp_flags = BTreeMap::new();
            tcp_flags.insert(TcpFlag::Syn, 1);
            if i.is_multiple_of(3) {
                tcp_flags.insert(TcpFlag::Ack, 2);
            }
            let mut app_fields = BTreeMap::new();
            if i.is_multiple_of(5) {
                app_fields.insert(
                    "http.uri".to_string(),
                    format!("/poll?cursor={}&session=abcdef0123456789", i % 13),
                );
            }
            FlowRecord {
                ts: 1_000_000.0 + f64::from(i) * 0.37,
                src_ip: ip(i % 7),
                src_port: (1024 + i % 60000) as u16,
                dst_ip: ip(100 + i % 23),
                dst_port: [21u16, 22, 80, 443][(i % 4) as usize],
                transport: Transport::Tcp,
                app_service: Some("http".to_string()),
                duration_s: f64::from(i % 50) * 0.1,
                fwd_packets: u64::from(i % 40) + 1,
                bwd_packets: u64::from(i % 30),
                fwd_bytes: (u64::from(i % 40) + 1) * 64,
                bwd_bytes: u64::from(i % 30) * 64,
                tcp_flags,
                app_fields,
                label: None,
            }
        })
        .collect()
}

/// Points with a small cluster structure for forest benchmarks.
pub fn synthetic_points(n: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            (0..dims)
                .map(|d| ((i * 31 + d * 17) % 97) as f64 + if i % 11 == 0 { 50.0 } else { 0.0 })
                .collect()
        })
        .collect()
}
