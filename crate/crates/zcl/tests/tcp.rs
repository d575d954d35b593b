use std::thread;
use std::time::Duration;

use zcl::cli::allocate_localhost_addrs;
use zcl::collectives::{z_allreduce, CollectiveConfig, ReduceKind};
use zcl::synth::{generate_field, SyntheticKind, SyntheticSpec};
use zcl::transport::connect_tcp;
use zcl_core::ErrorBoundSpec;

const TIMEOUT: Duration = Duration::from_secs(20);

#[test]
fn tcp_two_rank_send_recv() {
    let addrs = allocate_localhost_addrs(2).unwrap();
    let handles: Vec<_> = (0..2)
        .map(|rank| {
            let addrs = addrs.clone();
            thread::spawn(move || {
                let mut comm = connect_tcp(rank, &addrs, TIMEOUT).unwrap();
                if rank == 0 {
                    comm.send(1, b"hello over tcp".to_vec()).unwrap();
                    let back = comm.recv(1).unwrap();
                    assert_eq!(back, b"pong");
                } else {
                    let msg = comm.recv(0).unwrap();
                    assert_eq!(msg, b"hello over tcp");
                    comm.send(0, b"pong".to_vec()).unwrap();
                }
                comm.barrier().unwrap();
                comm.counters()
            })
        })
        .collect();
    let counters: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    // payload accounting excludes framing (barrier tokens add a little)
    assert!(counters[0].bytes_sent >= 14);
    assert!(counters[1].bytes_received >= 14);
    assert_eq!(counters[0].bytes_sent, counters[1].bytes_received);
    assert_eq!(counters[1].bytes_sent, counters[0].bytes_received);
}

#[test]
fn tcp_three_rank_allreduce_matches_loopback() {
    let n = 3;
    let len = 3 * 1024;
    let inputs: Vec<_> = (0..n)
        .map(|r| {
            generate_field(&SyntheticSpec::new(SyntheticKind::SineMix, len, 500 + r as u64))
                .unwrap()
        })
        .collect();
    let cfg = CollectiveConfig {
        error_bound: ErrorBoundSpec::Relative(1e-3),
        ..CollectiveConfig::default()
    };
    let addrs = allocate_localhost_addrs(n).unwrap();
    let handles: Vec<_> = (0..n)
        .map(|rank| {
            let addrs = addrs.clone();
            let field = inputs[rank].clone();
            let cfg = cfg.clone();
            thread::spawn(move || {
                let mut comm = connect_tcp(rank, &addrs, TIMEOUT).unwrap();
                let out = z_allreduce(&mut comm, &field, ReduceKind::Sum, &cfg).unwrap();
                comm.barrier().unwrap();
                out
            })
        })
        .collect();
    let tcp: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let loopback = zcl::collectives::run_loopback_world(n, |comm| {
        z_allreduce(comm, &inputs[comm.rank()], ReduceKind::Sum, &cfg)
    })
    .unwrap();
    for ((tf, tc), (lf, lc)) in tcp.iter().zip(&loopback) {
        // identical algorithm over identical data: same bytes, same work
        assert_eq!(tf.values(), lf.values());
        assert_eq!(tc.compress_ops, lc.compress_ops);
        assert_eq!(tc.data_bytes_sent, lc.data_bytes_sent);
        assert_eq!(tc.rounds, lc.rounds);
    }
}

#[test]
fn tcp_rank_collision_is_rejected() {
    let addrs = allocate_localhost_addrs(2).unwrap();
    let handles: Vec<_> = [0usize, 0]
        .into_iter()
        .map(|rank| {
            let addrs = addrs.clone();
            thread::spawn(move || connect_tcp(rank, &addrs, Duration::from_secs(5)))
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(results.iter().any(|r| r.is_err()));
}
