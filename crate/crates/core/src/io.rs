//! Binary sketch files.
//!
//! Layout (little-endian): magic `JSK1`, version `u32`, method tag `u8`,
//! `m` as `u64`, repetitions as `u32`, master seed `u64`, relation count
//! `u32`, then for each relation a `u32` name length, the UTF-8 name and
//! `reps * m` `f64` counters in repetition-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::JoinGraph;
use crate::sketch::{Method, RelationSketch, SketchConfig};

pub const MAGIC: &[u8; 4] = b"JSK1";
pub const FORMAT_VERSION: u32 = 1;

/// Writes a sketch set. All sketches must share one configuration and be
/// listed in relation order.
pub fn write_sketches<W: Write>(out: &mut W, sketches: &[RelationSketch]) -> Result<()> {
    let first = sketches
        .first()
        .ok_or_else(|| Error::InvalidArgument("no sketches to write".into()))?;
    let config = *first.config();
    for (k, s) in sketches.iter().enumerate() {
        if *s.config() != config {
            return Err(Error::Mismatch(format!("sketch `{}` has a different config", s.name())));
        }
        if s.relation() != k {
            return Err(Error::Mismatch(format!("sketch `{}` out of relation order", s.name())));
        }
    }
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&[config.method.tag()])?;
    out.write_all(&(config.m as u64).to_le_bytes())?;
    out.write_all(
        &u32::try_from(config.reps)
            .map_err(|_| Error::Format("too many repetitions".into()))?
            .to_le_bytes(),
    )?;
    out.write_all(&config.seed.to_le_bytes())?;
    out.write_all(&(sketches.len() as u32).to_le_bytes())?;
    for s in sketches {
        let name = s.name().as_bytes();
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name)?;
        for c in s.counters() {
            out.write_all(&c.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<R: Read, const N: usize>(input: &mut R, what: &str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated file while reading {what}")),
        _ => Error::Io(e),
    })?;
    Ok(buf)
}

fn read_u32<R: Read>(input: &mut R, what: &str) -> Result<u32> {
    read_array::<R, 4>(input, what).map(u32::from_le_bytes)
}

fn read_u64<R: Read>(input: &mut R, what: &str) -> Result<u64> {
    read_array::<R, 8>(input, what).map(u64::from_le_bytes)
}

/// Reads a sketch set; relation indices follow file order.
pub fn read_sketches<R: Read>(input: &mut R) -> Result<Vec<RelationSketch>> {
    if &read_array::<R, 4>(input, "magic")? != MAGIC {
        return Err(Error::Format("bad magic, not a sketch file".into()));
    }
    let version = read_u32(input, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let tag = read_array::<R, 1>(input, "method")?[0];
    let method = Method::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown method tag {tag}")))?;
    let m = usize::try_from(read_u64(input, "m")?).map_err(|_| Error::Format("m too large".into()))?;
    let reps = read_u32(input, "repetitions")? as usize;
    let seed = read_u64(input, "seed")?;
    let config = SketchConfig::new(m, reps, seed, method).map_err(|e| Error::Format(e.to_string()))?;
    let count = read_u32(input, "relation count")? as usize;
    let cells = m
        .checked_mul(reps)
        .ok_or_else(|| Error::Format("counter grid too large".into()))?;
    let mut sketches = Vec::with_capacity(count.min(1024));
    for k in 0..count {
        let len = read_u32(input, "name length")? as usize;
        let mut name = vec![0u8; len];
        input
            .read_exact(&mut name)
            .map_err(|_| Error::Format("truncated relation name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("relation name is not UTF-8".into()))?;
        let mut counters = Vec::with_capacity(cells.min(1 << 24));
        for _ in 0..cells {
            counters.push(f64::from_le_bytes(read_array::<R, 8>(input, "counters")?));
        }
        sketches.push(RelationSketch::from_counters(config, k, name, counters)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after last relation".into()));
    }
    Ok(sketches)
}

pub fn save_sketches(path: &Path, sketches: &[RelationSketch]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_sketches(&mut out, sketches)?;
    out.flush()?;
    Ok(())
}

pub fn load_sketches(path: &Path) -> Result<Vec<RelationSketch>> {
    read_sketches(&mut BufReader::new(File::open(path)?))
}

/// Reorders loaded sketches to the relation order of `graph`, matching by name.
pub fn align_to_graph(sketches: Vec<RelationSketch>, graph: &JoinGraph) -> Result<Vec<RelationSketch>> {
    if sketches.len() != graph.num_relations() {
        return Err(Error::Mismatch(format!(
            "sketch file has {} relations, query has {}",
            sketches.len(),
            graph.num_relations()
        )));
    }
    let mut slots: Vec<Option<RelationSketch>> = vec![None; sketches.len()];
    for s in sketches {
        let k = graph
            .relation_index(s.name())
            .ok_or_else(|| Error::Mismatch(format!("sketch file relation `{}` not in query", s.name())))?;
        if slots[k].is_some() {
            return Err(Error::Mismatch(format!("relation `{}` sketched twice", s.name())));
        }
        let config = *s.config();
        slots[k] = Some(RelationSketch::from_counters(
            config,
            k,
            s.name(),
            s.counters().to_vec(),
        )?);
    }
    Ok(slots.into_iter().map(|s| s.expect("every slot filled")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(method: Method) -> Vec<RelationSketch> {
        let config = SketchConfig::new(4, 2, 0xdead_beef, method).unwrap();
        vec![
            RelationSketch::from_counters(config, 0, "R", vec![1.0, -0.0, 2.5, 1e-300, f64::MAX, 3.0, -7.0, 0.1])
                .unwrap(),
            RelationSketch::from_counters(config, 1, "S#copy1", vec![0.0; 8]).unwrap(),
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for method in [Method::Conv, Method::Ams] {
            let sks = sample(method);
            let mut buf = Vec::new();
            write_sketches(&mut buf, &sks).unwrap();
            let back = read_sketches(&mut buf.as_slice()).unwrap();
            assert_eq!(back.len(), 2);
            for (a, b) in sks.iter().zip(&back) {
                assert_eq!(a.name(), b.name());
                assert_eq!(a.config(), b.config());
                let bits = |s: &RelationSketch| s.counters().iter().map(|c| c.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(a), bits(b));
            }
        }
    }

    #[test]
    fn header_layout() {
        let mut buf = Vec::new();
        write_sketches(&mut buf, &sample(Method::Ams)).unwrap();
        assert_eq!(&buf[..4], b"JSK1");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 1);
        assert_eq!(buf[8], 1);
        assert_eq!(u64::from_le_bytes(buf[9..17].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(buf[17..21].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[21..29].try_into().unwrap()), 0xdead_beef);
        assert_eq!(u32::from_le_bytes(buf[29..33].try_into().unwrap()), 2);
        // header + two (length, name, 8 counters) blocks
        assert_eq!(buf.len(), 33 + (4 + 1 + 64) + (4 + 7 + 64));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        write_sketches(&mut buf, &sample(Method::Conv)).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_sketches(&mut bad.as_slice()), Err(Error::Format(_))));
        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(read_sketches(&mut &truncated[..]), Err(Error::Format(_))));
        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(matches!(read_sketches(&mut trailing.as_slice()), Err(Error::Format(_))));
        let mut tag = buf;
        tag[8] = 9;
        assert!(matches!(read_sketches(&mut tag.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn align_by_name() {
        let g = JoinGraph::from_edges(&[1, 1], &[(0, 1)]).unwrap();
        let config = SketchConfig::conv(2, 1, 0).unwrap();
        let sks = vec![
            RelationSketch::from_counters(config, 0, "R1", vec![1.0, 2.0]).unwrap(),
            RelationSketch::from_counters(config, 1, "R0", vec![3.0, 4.0]).unwrap(),
        ];
        let aligned = align_to_graph(sks, &g).unwrap();
        assert_eq!(aligned[0].name(), "R0");
        assert_eq!(aligned[0].relation(), 0);
        assert_eq!(aligned[1].counters(), &[1.0, 2.0]);
    }
}
