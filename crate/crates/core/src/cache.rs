//! On-disk cache of channel covariances, keyed by the PDP contents and the
//! frequency grid, so repeated runs skip the factorization.
//!
//! File layout (little-endian): magic `b"EMLCOV01"`, `K: u64`, `r: u64`,
//! `Fs: f64`, then `H` (K·K) and `U` (K·r) as column-major (re, im) pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::channel::{channel_covariance, ChannelCovariance, FrequencyGrid, Pdp};
use crate::io::{read_complex, write_complex};
use crate::{CMatrix, Error, Result};

const MAGIC: &[u8; 8] = b"EMLCOV01";

/// Hex SHA-256 over the PDP's JSON form.
pub fn pdp_hash(pdp: &Pdp) -> String {
    let json = serde_json::to_vec(pdp).expect("PDP serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_covariance(path: &Path, cov: &ChannelCovariance, grid: &FrequencyGrid) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(cov.k() as u64).to_le_bytes())?;
    w.write_all(&(cov.rank() as u64).to_le_bytes())?;
    w.write_all(&grid.fs_hz.to_le_bytes())?;
    write_complex(&mut w, cov.h.as_slice())?;
    write_complex(&mut w, cov.u.as_slice())?;
    w.flush()?;
    Ok(())
}

pub fn read_covariance(path: &Path) -> Result<(ChannelCovariance, FrequencyGrid)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::validation(format!("{} is not a covariance file", path.display())));
    }
    let mut word = [0u8; 8];
    let mut next = |r: &mut BufReader<File>| -> std::io::Result<[u8; 8]> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let k = u64::from_le_bytes(next(&mut r)?) as usize;
    let rank = u64::from_le_bytes(next(&mut r)?) as usize;
    let fs = f64::from_le_bytes(next(&mut r)?);
    let grid = FrequencyGrid::new(k, fs)?;
    let h = CMatrix::from_vec(k, k, read_complex(&mut r, k * k)?);
    let u = CMatrix::from_vec(k, rank, read_complex(&mut r, k * rank)?);
    Ok((ChannelCovariance { h, u }, grid))
}

/// Directory-backed covariance cache.
#[derive(Clone, Debug)]
pub struct CovarianceCache {
    dir: PathBuf,
}

impl CovarianceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path_for(&self, pdp: &Pdp, grid: &FrequencyGrid, eps_rank: Option<f64>) -> PathBuf {
        let factor = match eps_rank {
            Some(eps) => format!("eig{:016x}", eps.to_bits()),
            None => "grid".to_string(),
        };
        self.dir.join(format!(
            "{}-k{}-fs{:016x}-{factor}.cov",
            &pdp_hash(pdp)[..16],
            grid.k,
            grid.fs_hz.to_bits()
        ))
    }

    /// Loads the covariance for `(pdp, grid)` or computes and stores it.
    /// With `eps_rank`, wide grid factors are compacted by eigendecomposition.
    pub fn get_or_compute(
        &self,
        pdp: &Pdp,
        grid: &FrequencyGrid,
        eps_rank: Option<f64>,
    ) -> Result<ChannelCovariance> {
        let path = self.path_for(pdp, grid, eps_rank);
        if path.exists() {
            let (cov, stored) = read_covariance(&path)?;
            if stored == *grid {
                return Ok(cov);
            }
        }
        let mut cov = channel_covariance(pdp, grid)?;
        if let Some(eps) = eps_rank {
            cov = cov.compact(eps)?;
        }
        write_covariance(&path, &cov, grid)?;
        Ok(cov)
    }
}
