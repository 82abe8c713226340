use std::time::{Duration, Instant};

use lmq_core::pool::{self, PoolOptions};
use lmq_core::reference::{f2_all_seq, f2_proj_seq, ExactOracle};
use lmq_core::streamgen::{gen_zipf, split_round_robin};
use lmq_core::{GlobalConfig, LmqSketch, SequentialDriver, StreamSpec, SyncMode};

fn stream(seed: u64) -> Vec<lmq_core::Tuple> {
    gen_zipf(&StreamSpec::new(1.5, 20_000, 300_000, seed))
}

#[test]
fn lagom_scanner_makes_progress_under_cycling_updates() {
    let p = 4;
    let sk = LmqSketch::new(GlobalConfig::new(p, 4, 256).with_audit(true)).unwrap();
    let opts = PoolOptions { cycle: true, ..Default::default() };
    let (_, stats) = pool::run(&sk, &split_round_robin(&stream(1), p), &opts, |ctl| {
        let mut sc = sk.lagom_scanner().unwrap();
        let start = Instant::now();
        while start.elapsed() < Duration::from_secs(2) {
            sc.f2_lagom();
        }
        ctl.stop();
        sc.stats()
    });
    assert!(stats.queries > 0);
    assert_eq!(stats.audit_violations, 0);
}

#[test]
fn every_mode_finishes_with_concurrent_queries() {
    for mode in [SyncMode::FullSync, SyncMode::NoSync, SyncMode::Lagom] {
        let p = 4;
        let s = stream(2);
        let mut sk = LmqSketch::new(GlobalConfig::new(p, 4, 256).with_mode(mode)).unwrap();
        pool::run(&sk, &split_round_robin(&s, p), &PoolOptions::default(), |ctl| {
            while !ctl.all_done() {
                match mode {
                    SyncMode::FullSync => {
                        sk.f2_fullsync();
                        sk.f1_fullsync();
                    }
                    SyncMode::NoSync => {
                        sk.f2_nosync();
                    }
                    SyncMode::Lagom => {
                        sk.lagom_scanner().unwrap().f2_lagom();
                    }
                }
                sk.f1_query();
                std::thread::yield_now();
            }
        });
        sk.quiesce();
        assert_eq!(sk.f1_query(), s.len() as u64);
    }
}

#[test]
fn f1_and_point_queries_never_decrease() {
    let p = 4;
    let sk = LmqSketch::new(GlobalConfig::new(p, 4, 256)).unwrap();
    let opts = PoolOptions { pq_every: 7, check_pq_monotonic: true, ..Default::default() };
    let (reports, bad) = pool::run(&sk, &split_round_robin(&stream(3), p), &opts, |ctl| {
        let (mut prev, mut bad) = (0, 0);
        while !ctl.all_done() {
            let v = sk.f1_query();
            bad += (v < prev) as u32;
            prev = v;
            std::thread::yield_now();
        }
        bad
    });
    assert_eq!(bad, 0);
    assert!(reports.iter().map(|r| r.pq_pairs).sum::<u64>() > 0);
    assert_eq!(reports.iter().map(|r| r.pq_violations).sum::<u64>(), 0);
}

#[test]
fn quiescent_queries_match_the_frozen_references() {
    for seed in 0..4 {
        let p = 2 + seed as usize;
        let s = stream(seed);
        let mut sk = LmqSketch::new(GlobalConfig::new(p, 4, 128).with_seed(seed)).unwrap();
        SequentialDriver::new(&sk).unwrap().run(&split_round_robin(&s, p));
        let frozen = sk.freeze();
        assert_eq!(sk.lagom_scanner().unwrap().f2_lagom().value, f2_proj_seq(&frozen));
        assert_eq!(sk.f2_nosync(), f2_all_seq(&frozen));
        sk.quiesce();
        let f2 = ExactOracle::from_stream(&s).f2();
        assert!(sk.f2_nosync() >= f2);
        assert_eq!(sk.f2_nosync(), sk.f2_fullsync());
    }
}
