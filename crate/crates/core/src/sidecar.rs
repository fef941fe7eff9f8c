//! Binary sidecars for beamformer weights and frozen cleaner taps.
//!
//! Layout, all little-endian:
//!
//! ```text
//! weights: u64 bin_count | u64 M              | bin_count·M       × (f64 re, f64 im)
//! taps:    u64 bin_count | u64 M−1 | u64 L    | bin_count·(M−1)·L × (f64 re, f64 im)
//! ```
//!
//! Values are ordered bin-major; taps within a bin by auxiliary channel, then
//! lag. Tap files carry no reference-channel field; readers supply it.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::cab::{BeamformerWeights, PhaseConvention};
use crate::cleaner::CleanerFilterBank;
use crate::error::{Error, Result};

fn write_u64(w: &mut impl Write, v: usize) -> Result<()> {
    w.write_all(&(v as u64).to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    usize::try_from(u64::from_le_bytes(b))
        .map_err(|_| Error::InvalidSidecar("dimension overflows usize".into()))
}

fn write_values<'a>(w: &mut impl Write, values: impl Iterator<Item = &'a Complex64>) -> Result<()> {
    for v in values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_values(r: &mut impl Read, count: usize) -> Result<Vec<Complex64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 16 {
        return Err(Error::InvalidSidecar(format!(
            "expected {} payload bytes, found {}",
            count * 16,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

const MAX_DIM: usize = 1 << 24;

pub fn write_weights(w: &mut impl Write, weights: &BeamformerWeights) -> Result<()> {
    write_u64(w, weights.bin_count())?;
    write_u64(w, weights.channel_count())?;
    write_values(w, weights.weights.iter().flatten())
}

pub fn read_weights(r: &mut impl Read) -> Result<BeamformerWeights> {
    let bins = read_u64(r)?;
    let m = read_u64(r)?;
    if bins == 0 || m == 0 || bins > MAX_DIM || m > 64 {
        return Err(Error::InvalidSidecar(format!("implausible shape {bins} x {m}")));
    }
    let values = read_values(r, bins * m)?;
    Ok(BeamformerWeights {
        weights: values.chunks_exact(m).map(<[_]>::to_vec).collect(),
        normalization: PhaseConvention::LargestEntry,
        fallback_bins: Vec::new(),
        dominance: Vec::new(),
    })
}

pub fn write_taps(w: &mut impl Write, bank: &CleanerFilterBank) -> Result<()> {
    write_u64(w, bank.bin_count())?;
    write_u64(w, bank.channel_count() - 1)?;
    write_u64(w, bank.tap_count())?;
    write_values(w, bank.all_taps().iter().flatten())
}

/// Reads a tap sidecar into a frozen bank.
pub fn read_taps(r: &mut impl Read, reference: usize) -> Result<CleanerFilterBank> {
    let bins = read_u64(r)?;
    let aux = read_u64(r)?;
    let taps = read_u64(r)?;
    if bins == 0 || aux == 0 || taps == 0 || bins > MAX_DIM || aux > 64 || taps > 1024 {
        return Err(Error::InvalidSidecar(format!(
            "implausible shape {bins} x {aux} x {taps}"
        )));
    }
    let values = read_values(r, bins * aux * taps)?;
    CleanerFilterBank::from_frozen_taps(
        values.chunks_exact(aux * taps).map(<[_]>::to_vec).collect(),
        aux + 1,
        taps,
        reference,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_layout_is_bit_exact() {
        let w = BeamformerWeights {
            weights: vec![
                vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, -0.25)],
                vec![Complex64::new(0.0, 1.0), Complex64::new(-2.0, 3.0)],
            ],
            normalization: PhaseConvention::LargestEntry,
            fallback_bins: vec![],
            dominance: vec![],
        };
        let mut buf = Vec::new();
        write_weights(&mut buf, &w).unwrap();
        assert_eq!(buf.len(), 16 + 4 * 16);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &1.0f64.to_le_bytes());
        assert_eq!(&buf[40..48], &(-0.25f64).to_le_bytes());
        let back = read_weights(&mut buf.as_slice()).unwrap();
        assert_eq!(back.weights, w.weights);
    }

    #[test]
    fn taps_round_trip() {
        let taps: Vec<Vec<Complex64>> = (0..5)
            .map(|k| (0..6).map(|i| Complex64::new(k as f64, i as f64 * 0.5)).collect())
            .collect();
        let bank = CleanerFilterBank::from_frozen_taps(taps, 3, 3, 0).unwrap();
        let mut buf = Vec::new();
        write_taps(&mut buf, &bank).unwrap();
        assert_eq!(&buf[8..16], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &3u64.to_le_bytes());
        let back = read_taps(&mut buf.as_slice(), 0).unwrap();
        assert_eq!(back, bank);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut buf = Vec::new();
        write_u64(&mut buf, 2).unwrap();
        write_u64(&mut buf, 2).unwrap();
        buf.extend_from_slice(&[0u8; 20]);
        assert!(matches!(
            read_weights(&mut buf.as_slice()),
            Err(Error::InvalidSidecar(_))
        ));
    }
}
