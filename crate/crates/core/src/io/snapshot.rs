//! Binary state snapshots.
//!
//! Layout (little endian): the magic `NSCH0001`, `u32 nx`, `u32 ny`,
//! `f64 t`, then `phi`, `mu`, `p` (`nx ny` values each, row-major),
//! `ux` (`(nx + 1) ny`) and `uy` (`nx (ny + 1)`). The domain lengths are not
//! stored and must be supplied when reading.

use std::path::Path;

use crate::coupled::State;
use crate::grid::{Grid, MacVector, ScalarField};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NSCH0001";
const HEADER: usize = 8 + 4 + 4 + 8;

/// Exact file length for an `nx` by `ny` grid.
pub fn snapshot_len(nx: usize, ny: usize) -> usize {
    HEADER + 8 * (3 * nx * ny + (nx + 1) * ny + nx * (ny + 1))
}

pub fn encode_snapshot(state: &State) -> Result<Vec<u8>> {
    let g = state.grid();
    let nx = u32::try_from(g.nx).map_err(|_| Error::Snapshot("nx does not fit in u32".into()))?;
    let ny = u32::try_from(g.ny).map_err(|_| Error::Snapshot("ny does not fit in u32".into()))?;
    let mut out = Vec::with_capacity(snapshot_len(g.nx, g.ny));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&nx.to_le_bytes());
    out.extend_from_slice(&ny.to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    for block in [
        state.phi.values(),
        state.mu.values(),
        state.p.values(),
        &state.u.ux,
        &state.u.uy,
    ] {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take_f64s(bytes: &[u8], at: &mut usize, n: usize) -> Vec<f64> {
    let out = bytes[*at..*at + 8 * n]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    *at += 8 * n;
    out
}

pub fn decode_snapshot(bytes: &[u8], lx: f64, ly: f64) -> Result<State> {
    if bytes.len() < HEADER {
        return Err(Error::Snapshot(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let nx = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let ny = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let t = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let expected = snapshot_len(nx, ny);
    if bytes.len() != expected {
        return Err(Error::Snapshot(format!(
            "length {} does not match {expected} for a {nx}x{ny} grid",
            bytes.len()
        )));
    }
    let g = Grid::new(nx, ny, lx, ly)?;
    let mut at = HEADER;
    let n = g.n_cells();
    let phi = ScalarField::from_vec(g, take_f64s(bytes, &mut at, n))?;
    let mu = ScalarField::from_vec(g, take_f64s(bytes, &mut at, n))?;
    let p = ScalarField::from_vec(g, take_f64s(bytes, &mut at, n))?;
    let ux = take_f64s(bytes, &mut at, g.n_xfaces());
    let uy = take_f64s(bytes, &mut at, g.n_yfaces());
    let u = MacVector::from_vecs(g, ux, uy)?;
    Ok(State { t, u, p, phi, mu })
}

pub fn write_snapshot(path: &Path, state: &State) -> Result<()> {
    std::fs::write(path, encode_snapshot(state)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path, lx: f64, ly: f64) -> Result<State> {
    decode_snapshot(&std::fs::read(path)?, lx, ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(nx: usize, ny: usize, seed: u64) -> State {
        let g = Grid::new(nx, ny, 2.0, 1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-0.9..0.9)).collect() };
        let phi = ScalarField::from_vec(g, v(g.n_cells())).unwrap();
        let u = MacVector::from_vecs(g, v(g.n_xfaces()), v(g.n_yfaces())).unwrap();
        let mut s = State::from_phase(phi, u, &PotentialKind::FloryHuggins { theta: 1.0, theta0: 2.0 }).unwrap();
        s.p = ScalarField::from_vec(g, v(g.n_cells())).unwrap();
        s.t = 0.1 + 0.2;
        s
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for (nx, ny) in [(5, 3), (8, 1)] {
            let s = random_state(nx, ny, 9);
            let bytes = encode_snapshot(&s).unwrap();
            assert_eq!(bytes.len(), snapshot_len(nx, ny));
            let back = decode_snapshot(&bytes, 2.0, 1.5).unwrap();
            assert_eq!(back.t.to_bits(), s.t.to_bits());
            for (a, b) in [(&back.phi, &s.phi), (&back.mu, &s.mu), (&back.p, &s.p)] {
                assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            assert_eq!(back.u, s.u);
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let s = random_state(6, 4, 2);
        write_snapshot(&path, &s).unwrap();
        assert_eq!(read_snapshot(&path, 2.0, 1.5).unwrap(), s);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let bytes = encode_snapshot(&random_state(5, 3, 1)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_snapshot(&bad, 2.0, 1.5), Err(Error::Snapshot(_))));
        assert!(matches!(decode_snapshot(&bytes[..bytes.len() - 1], 2.0, 1.5), Err(Error::Snapshot(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_snapshot(&long, 2.0, 1.5), Err(Error::Snapshot(_))));
        assert!(matches!(decode_snapshot(&bytes[..10], 2.0, 1.5), Err(Error::Snapshot(_))));
    }
}
