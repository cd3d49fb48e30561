//! File formats.
//!
//! Observations are stored as a raw binary file of little-endian `f64` pairs
//! (re, im), station-major then sample-major (`K·D` samples per station), plus
//! a JSON sidecar `{M, K, D, Fs, noise_variance}` next to it with a `.json`
//! extension. Everything else (scenarios, PDPs, configs, results) is JSON.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::channel::FrequencyGrid;
use crate::signal::ObservationSet;
use crate::{Complex64, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationHeader {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "Fs")]
    pub fs: f64,
    pub noise_variance: f64,
}

impl ObservationHeader {
    pub fn of(obs: &ObservationSet) -> Self {
        Self {
            m: obs.num_stations(),
            k: obs.grid.k,
            d: obs.d,
            fs: obs.grid.fs_hz,
            noise_variance: obs.noise_variance,
        }
    }
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn write_complex<W: Write>(mut w: W, samples: &[Complex64]) -> std::io::Result<()> {
    for z in samples {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_complex<R: Read>(mut r: R, n: usize) -> std::io::Result<Vec<Complex64>> {
    let mut buf = [0u8; 16];
    (0..n)
        .map(|_| {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            Ok(Complex64::new(re, im))
        })
        .collect()
}

/// Writes `bin` and its JSON sidecar.
pub fn write_observations(bin: &Path, obs: &ObservationSet) -> Result<()> {
    obs.validate()?;
    let mut w = BufWriter::new(File::create(bin)?);
    for y in &obs.y {
        write_complex(&mut w, y)?;
    }
    w.flush()?;
    write_json(&sidecar_path(bin), &ObservationHeader::of(obs))
}

pub fn read_observations(bin: &Path) -> Result<ObservationSet> {
    let header: ObservationHeader = read_json(&sidecar_path(bin))?;
    let grid = FrequencyGrid::new(header.k, header.fs)?;
    let kd = header.k * header.d;
    let file = File::open(bin)?;
    let expected = (header.m * kd * 16) as u64;
    let actual = file.metadata()?.len();
    if actual != expected {
        return Err(Error::validation(format!(
            "{} holds {actual} bytes, header implies {expected}",
            bin.display()
        )));
    }
    let mut r = BufReader::new(file);
    let y = (0..header.m)
        .map(|_| read_complex(&mut r, kd))
        .collect::<std::io::Result<Vec<_>>>()?;
    let obs = ObservationSet {
        y,
        grid,
        d: header.d,
        noise_variance: header.noise_variance,
    };
    obs.validate()?;
    Ok(obs)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs_from(values: Vec<(f64, f64)>, m: usize, k: usize, d: usize) -> ObservationSet {
        let kd = k * d;
        let y = (0..m)
            .map(|s| values[s * kd..(s + 1) * kd].iter().map(|&(a, b)| Complex64::new(a, b)).collect())
            .collect();
        ObservationSet {
            y,
            grid: FrequencyGrid::new(k, 40e6).unwrap(),
            d,
            noise_variance: 0.25,
        }
    }

    proptest! {
        #[test]
        fn observation_file_round_trip(
            (m, k, d, values) in (2usize..4, 1usize..6, 1usize..4).prop_flat_map(|(m, k, d)| {
                (Just(m), Just(k), Just(d),
                 prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), m * k * d))
            })
        ) {
            let dir = tempfile::tempdir().unwrap();
            let bin = dir.path().join("obs.bin");
            let obs = obs_from(values, m, k, d);
            write_observations(&bin, &obs).unwrap();
            prop_assert_eq!(std::fs::metadata(&bin).unwrap().len() as usize, m * k * d * 16);
            prop_assert_eq!(read_observations(&bin).unwrap(), obs);
        }
    }

    #[test]
    fn layout_is_interleaved_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("obs.bin");
        let obs = obs_from(vec![(1.0, 2.0), (3.0, 4.0), (5.0, 6.0), (7.0, 8.0)], 2, 2, 1);
        write_observations(&bin, &obs).unwrap();
        let bytes = std::fs::read(&bin).unwrap();
        let words: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(words, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let header: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&bin)).unwrap()).unwrap();
        assert_eq!(header["M"], 2);
        assert_eq!(header["K"], 2);
        assert_eq!(header["D"], 1);
        assert_eq!(header["Fs"], 40e6);
        assert_eq!(header["noise_variance"], 0.25);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bin = dir.path().join("obs.bin");
        let obs = obs_from(vec![(1.0, 2.0); 4], 2, 2, 1);
        write_observations(&bin, &obs).unwrap();
        std::fs::write(&bin, [0u8; 40]).unwrap();
        assert!(matches!(read_observations(&bin), Err(Error::Validation(_))));
    }
}
