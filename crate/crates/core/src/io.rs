//! Binary grid snapshots and number formatting shared by every writer.
//!
//! Snapshot layout (`WAVEFN01`):
//!
//! ```text
//! 8 bytes   magic "WAVEFN01"
//! 4 bytes   u32 little-endian length of the JSON header
//! n bytes   UTF-8 JSON {"dims", "extents", "counts", "values"}
//! ...       little-endian f64 payload: (re, im) pairs, or reals when
//!           "values" is "real"
//! ```
//!
//! `extents` are the per-axis half-extents `L`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridSpec, WaveState};

pub const MAGIC: &[u8; 8] = b"WAVEFN01";

/// Seventeen significant digits, enough to round-trip any f64.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Complex,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub dims: usize,
    pub extents: Vec<f64>,
    pub counts: Vec<usize>,
    #[serde(default = "default_kind")]
    pub values: ValueKind,
}

fn default_kind() -> ValueKind {
    ValueKind::Complex
}

impl SnapshotHeader {
    fn grid_spec(&self) -> GridSpec {
        GridSpec {
            half_extent: self.extents.clone(),
            counts: self.counts.clone(),
        }
    }
}

fn write_header<W: Write>(w: &mut W, grid: &Grid, values: ValueKind) -> Result<()> {
    let header = SnapshotHeader {
        dims: grid.dims(),
        extents: grid.half_extent().to_vec(),
        counts: grid.counts().to_vec(),
        values,
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub fn write_wavefunction<W: Write>(w: &mut W, state: &WaveState) -> Result<()> {
    write_header(w, state.grid(), ValueKind::Complex)?;
    let mut buf = Vec::with_capacity(state.amplitudes().len() * 16);
    for z in state.amplitudes() {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_real_grid<W: Write>(w: &mut W, grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(
            "value count does not match grid".into(),
        ));
    }
    write_header(w, grid, ValueKind::Real)?;
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Raw snapshot contents: header plus the decoded payload.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub data: Vec<f64>,
}

pub fn read_snapshot<R: Read>(r: &mut R) -> Result<Snapshot> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic, expected WAVEFN01".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: SnapshotHeader = serde_json::from_slice(&json)?;
    if header.dims != header.counts.len() || header.dims != header.extents.len() {
        return Err(Error::Format("inconsistent snapshot header".into()));
    }
    let nodes: usize = header.counts.iter().product();
    let per = match header.values {
        ValueKind::Complex => 2,
        ValueKind::Real => 1,
    };
    let mut raw = vec![0u8; nodes * per * 8];
    r.read_exact(&mut raw)?;
    let data = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Snapshot { header, data })
}

pub fn read_wavefunction<R: Read>(r: &mut R) -> Result<WaveState> {
    let snap = read_snapshot(r)?;
    if snap.header.values != ValueKind::Complex {
        return Err(Error::Format("snapshot holds real values".into()));
    }
    let grid = snap.header.grid_spec().build()?;
    let amps = snap
        .data
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    WaveState::from_amplitudes(grid, amps)
}

pub fn read_real_grid<R: Read>(r: &mut R) -> Result<(Arc<Grid>, Vec<f64>)> {
    let snap = read_snapshot(r)?;
    if snap.header.values != ValueKind::Real {
        return Err(Error::Format("snapshot holds complex values".into()));
    }
    Ok((snap.header.grid_spec().build()?, snap.data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_gaussian, WavePacketSpec};
    use proptest::prelude::*;

    #[test]
    fn layout_starts_with_magic_and_header() {
        let grid = Arc::new(Grid::cubic(1, 10.0, 64).unwrap());
        let state = make_gaussian(&grid, &WavePacketSpec::at_rest(vec![0.0], 1.0)).unwrap();
        let mut buf = Vec::new();
        write_wavefunction(&mut buf, &state).unwrap();
        assert_eq!(&buf[..8], b"WAVEFN01");
        let len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&buf[12..12 + len]).unwrap();
        assert_eq!(header["dims"], 1);
        assert_eq!(header["counts"][0], 64);
        assert_eq!(buf.len(), 12 + len + 64 * 16);
        let re = f64::from_le_bytes(buf[12 + len..20 + len].try_into().unwrap());
        assert_eq!(re, state.amplitudes()[0].re);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"WAVEFN02\0\0\0\0".to_vec();
        assert!(read_wavefunction(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn formatting_round_trips() {
        for v in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    proptest! {
        #[test]
        fn wavefunction_round_trip(vals in proptest::collection::vec(-1e3f64..1e3, 64)) {
            let grid = Arc::new(Grid::new(&[2.0, 3.0], &[8, 4 * 2]).unwrap());
            let amps: Vec<Complex64> = vals.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
            let amps = [amps.clone(), amps].concat();
            let state = WaveState::from_amplitudes(grid, amps).unwrap();
            let mut buf = Vec::new();
            write_wavefunction(&mut buf, &state).unwrap();
            let back = read_wavefunction(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back.amplitudes(), state.amplitudes());
            prop_assert_eq!(back.grid().spec(), state.grid().spec());
        }

        #[test]
        fn real_grid_round_trip(vals in proptest::collection::vec(-1e6f64..1e6, 16)) {
            let grid = Grid::cubic(1, 1.5, 16).unwrap();
            let mut buf = Vec::new();
            write_real_grid(&mut buf, &grid, &vals).unwrap();
            let (g, back) = read_real_grid(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, vals);
            prop_assert_eq!(g.spec(), grid.spec());
        }
    }
}
