use lmq_core::reference::{fast_agms_f2, mape, part_cmplus, partas_cmplus, wide_cmplus, ExactOracle};
use lmq_core::streamgen::{gen_zipf, read_any, read_csv, read_tuples, write_csv, write_tuples};
use lmq_core::{StreamSpec, Tuple};

#[test]
fn fast_agms_is_within_five_percent_on_a_long_zipf_stream() {
    let stream = gen_zipf(&StreamSpec::new(1.0, 100_000, 10_000_000, 3));
    let f2 = ExactOracle::from_stream(&stream).f2() as f64;
    let est = fast_agms_f2(&stream, 6, 1 << 13, 17) as f64;
    let err = mape(&[est], &[f2]);
    assert!(err < 5.0, "relative error {err:.2}%");
}

#[test]
fn ladder_never_underestimates_and_tightens_with_partitioning() {
    let (rows, cols) = (8, 256);
    let mut sums = [0.0f64; 3];
    for seed in 0..5 {
        let stream = gen_zipf(&StreamSpec::new(1.5, 20_000, 500_000, seed));
        let f2 = ExactOracle::from_stream(&stream).f2();
        let wide = wide_cmplus(&stream, rows, 8 * cols, seed);
        let part = part_cmplus(&stream, 8, rows, cols, seed);
        let partas = partas_cmplus(&stream, 8, rows, cols, 16, seed);
        for est in [wide, part, partas] {
            assert!(est >= f2, "{est} < {f2}");
        }
        for (s, est) in sums.iter_mut().zip([wide, part, partas]) {
            *s += mape(&[est as f64], &[f2 as f64]);
        }
    }
    assert!(sums[2] <= sums[1] && sums[1] <= sums[0], "{sums:?}");
}

#[test]
fn single_partition_matches_the_wide_sketch() {
    let stream = gen_zipf(&StreamSpec::new(1.2, 5_000, 50_000, 9));
    assert_eq!(part_cmplus(&stream, 1, 4, 128, 9), wide_cmplus(&stream, 4, 128, 9));
}

#[test]
fn binary_and_csv_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let stream: Vec<Tuple> = gen_zipf(&StreamSpec::new(1.5, 1_000, 1_000, 4))
        .into_iter()
        .enumerate()
        .map(|(i, t)| Tuple::new(t.key, 1 + i as u64 % 7))
        .collect();
    let bin = dir.path().join("s.lmqs");
    let csv = dir.path().join("s.csv");
    write_tuples(&bin, &stream).unwrap();
    write_csv(&csv, &stream).unwrap();
    assert_eq!(read_tuples(&bin).unwrap(), stream);
    assert_eq!(read_csv(&csv).unwrap(), stream);
    assert_eq!(read_any(&csv).unwrap(), read_any(&bin).unwrap());
}

#[test]
fn truncated_binary_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.lmqs");
    write_tuples(&path, &[Tuple::unit(1), Tuple::unit(2)]).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(read_tuples(&path).is_err());
}
