//! Synthetic Zipfian streams, tuple-file I/O and per-thread splitting.
//!
//! Binary tuple files are a 14-byte header (`"LMQS"`, version `u16`, tuple
//! count `u64`) followed by `(key: u32, value: u32)` records, all little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::Tuple;

pub const MAGIC: [u8; 4] = *b"LMQS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 14;
const RECORD_LEN: usize = 8;

/// Parameters of a synthetic stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamSpec {
    /// Skew; 0 is uniform.
    pub z: f64,
    /// Keys are ranks `1..=domain`.
    pub domain: u64,
    pub length: u64,
    pub seed: u64,
}

impl StreamSpec {
    pub fn new(z: f64, domain: u64, length: u64, seed: u64) -> Self {
        Self { z, domain, length, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.z >= 0.0 && self.z.is_finite()) {
            return Err(Error::InvalidConfig(format!("skew must be a finite z >= 0, got {}", self.z)));
        }
        if self.domain == 0 || self.domain > u32::MAX as u64 {
            return Err(Error::InvalidConfig(format!("domain {} outside 1..=2^32-1", self.domain)));
        }
        Ok(())
    }
}

/// Parses `z,domain,length,seed`.
impl std::str::FromStr for StreamSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("expected z,domain,length,seed, got {s:?}"));
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [z, domain, length, seed] = parts[..] else { return Err(bad()) };
        let spec = Self {
            z: z.parse().map_err(|_| bad())?,
            domain: domain.parse().map_err(|_| bad())?,
            length: length.parse().map_err(|_| bad())?,
            seed: seed.parse().map_err(|_| bad())?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Samples ranks `1..=domain` with probability proportional to `rank^-z`,
/// by binary search over the cumulative distribution.
#[derive(Clone, Debug)]
pub struct ZipfSampler {
    cdf: Vec<f64>,
}

impl ZipfSampler {
    pub fn new(z: f64, domain: u64) -> Self {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = (1..=domain)
            .map(|r| {
                acc += (r as f64).powf(-z);
                acc
            })
            .collect();
        for c in &mut cdf {
            *c /= acc;
        }
        if let Some(last) = cdf.last_mut() {
            *last = 1.0;
        }
        Self { cdf }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> u64 {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1) as u64 + 1
    }
}

/// Unit-value tuples with Zipf-distributed keys. Deterministic in `spec`.
pub fn gen_zipf(spec: &StreamSpec) -> Vec<Tuple> {
    spec.validate().expect("invalid stream spec");
    let sampler = ZipfSampler::new(spec.z, spec.domain);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.length).map(|_| Tuple::unit(sampler.sample(&mut rng))).collect()
}

/// Deals tuple `t` to sub-stream `t mod parts`.
pub fn split_round_robin(stream: &[Tuple], parts: usize) -> Vec<Vec<Tuple>> {
    assert!(parts >= 1);
    let mut out: Vec<Vec<Tuple>> = (0..parts).map(|i| Vec::with_capacity(stream.len() / parts + (i < stream.len() % parts) as usize)).collect();
    for (i, t) in stream.iter().enumerate() {
        out[i % parts].push(*t);
    }
    out
}

fn check_tuple(record: u64, t: &Tuple) -> Result<(u32, u32)> {
    let bad = |reason: String| Error::InvalidTuple { record, reason };
    let key = u32::try_from(t.key).map_err(|_| bad(format!("key {} does not fit in 32 bits", t.key)))?;
    let value = u32::try_from(t.value).map_err(|_| bad(format!("value {} does not fit in 32 bits", t.value)))?;
    if value == 0 {
        return Err(bad("value must be positive".into()));
    }
    Ok((key, value))
}

pub fn write_tuples_to(mut w: impl Write, tuples: &[Tuple]) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(tuples.len() as u64).to_le_bytes())?;
    for (i, t) in tuples.iter().enumerate() {
        let (key, value) = check_tuple(i as u64, t)?;
        w.write_all(&key.to_le_bytes())?;
        w.write_all(&value.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads up to `buf.len()` bytes, stopping early only at end of input.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(n)
}

pub fn read_tuples_from(mut r: impl Read) -> Result<Vec<Tuple>> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(&mut r, &mut header)?;
    if got < 4 || header[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if got < 6 {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, found: got as u64 });
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != VERSION {
        return Err(Error::VersionMismatch { found: version, expected: VERSION });
    }
    if got < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN as u64, found: got as u64 });
    }
    let count = u64::from_le_bytes(header[6..].try_into().unwrap());
    let mut out = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut rec = [0u8; RECORD_LEN];
    for i in 0..count {
        if read_full(&mut r, &mut rec)? < RECORD_LEN {
            return Err(Error::Truncated { expected: count, found: i });
        }
        let key = u32::from_le_bytes(rec[..4].try_into().unwrap());
        let value = u32::from_le_bytes(rec[4..].try_into().unwrap());
        if value == 0 {
            return Err(Error::InvalidTuple { record: i, reason: "value must be positive".into() });
        }
        out.push(Tuple::new(key as u64, value as u64));
    }
    Ok(out)
}

pub fn write_tuples(path: impl AsRef<Path>, tuples: &[Tuple]) -> Result<()> {
    write_tuples_to(BufWriter::new(File::create(path)?), tuples)
}

pub fn read_tuples(path: impl AsRef<Path>) -> Result<Vec<Tuple>> {
    read_tuples_from(BufReader::new(File::open(path)?))
}

/// Writes `key,value` lines, without a header.
pub fn write_csv(path: impl AsRef<Path>, tuples: &[Tuple]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for t in tuples {
        w.write_record(&[t.key.to_string(), t.value.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `key,value` lines. A first line that does not parse as numbers is
/// taken as a header and skipped.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<Tuple>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| Error::InvalidTuple { record: i as u64, reason };
        if rec.len() != 2 {
            return Err(bad(format!("expected 2 fields, found {}", rec.len())));
        }
        let parsed = (rec[0].parse::<u64>(), rec[1].parse::<u64>());
        match parsed {
            (Ok(key), Ok(value)) if value > 0 => out.push(Tuple::new(key, value)),
            (Ok(_), Ok(_)) => return Err(bad("value must be positive".into())),
            _ if i == 0 => continue,
            _ => return Err(bad(format!("unparsable record {:?}", rec.as_slice()))),
        }
    }
    Ok(out)
}

/// Reads a tuple file, as CSV if the extension is `.csv` and binary otherwise.
pub fn read_any(path: impl AsRef<Path>) -> Result<Vec<Tuple>> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("csv") => read_csv(path),
        _ => read_tuples(path),
    }
}
