use crate::asketch::{ASketch, DEFAULT_EWMA_WEIGHT};
use crate::hash::{derive_seed, ColumnHash, Partitioner};
use crate::sketch::{CountMin, SketchConfig};
use crate::Tuple;

// Sub-sketch `i` is seeded exactly as partition `i` of an `LmqSketch` with the
// same seed, so a one-partition ladder and a wide sketch of equal geometry
// coincide.
fn sub_config(rows: usize, cols: usize, seed: u64, i: usize) -> SketchConfig {
    SketchConfig { rows, cols, seed: derive_seed(seed, i as u64) }
}

/// CM+ of one `rows x cols` CMS over the whole stream. For the ladder
/// comparison pass `cols = P * K`.
pub fn wide_cmplus(stream: &[Tuple], rows: usize, cols: usize, seed: u64) -> u64 {
    wide_cmplus_with(stream, CountMin::new(&sub_config(rows, cols, seed, 0)))
}

pub fn wide_cmplus_with<S: ColumnHash>(stream: &[Tuple], cms: CountMin<S>) -> u64 {
    for t in stream {
        cms.update_enh(t.key, t.value);
    }
    cms.cmplus_seq()
}

/// Sum of per-partition CM+ over `p` disjoint `rows x cols` sketches.
pub fn part_cmplus(stream: &[Tuple], p: usize, rows: usize, cols: usize, seed: u64) -> u64 {
    let owner = Partitioner::new(p, seed);
    let sketches = (0..p).map(|i| CountMin::new(&sub_config(rows, cols, seed, i))).collect();
    part_cmplus_with(stream, |k| owner.owner(k), sketches)
}

pub fn part_cmplus_with<S: ColumnHash>(
    stream: &[Tuple],
    owner: impl Fn(u64) -> usize,
    sketches: Vec<CountMin<S>>,
) -> u64 {
    for t in stream {
        sketches[owner(t.key)].update_enh(t.key, t.value);
    }
    sketches.iter().map(CountMin::cmplus_seq).sum()
}

/// Sum over `p` augmented sketches of CM+ plus each resident key's
/// `count^2 - old_count^2`. Tuples go straight into their owner's sketch, with
/// no delegation buffering.
pub fn partas_cmplus(stream: &[Tuple], p: usize, rows: usize, cols: usize, slots: usize, seed: u64) -> u64 {
    let owner = Partitioner::new(p, seed);
    let sketches: Vec<ASketch> = (0..p)
        .map(|i| ASketch::with_cms(CountMin::new(&sub_config(rows, cols, seed, i)), slots, DEFAULT_EWMA_WEIGHT))
        .collect();
    for t in stream {
        sketches[owner.owner(t.key)].insert_enh(t.key, t.value);
    }
    sketches.iter().map(ASketch::cmplus_with_filter).sum()
}
