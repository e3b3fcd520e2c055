//! On-disk kernel cache keyed by the link hash.

use super::kernel::{PerturbationKernel, PulseShape, Quadrature};
use crate::error::{Error, Result};
use crate::fiber::LinkConfig;
use num_complex::Complex64;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

const KERNEL_MAGIC: &[u8; 8] = b"SLKERN01";

/// Binary layout: magic, little-endian u32 header length, JSON header (the
/// kernel without coefficients), then every block's coefficients in row-major
/// (m, n) order as little-endian f64 `(re, im)` pairs.
pub fn write_kernel<W: Write>(kernel: &PerturbationKernel, mut w: W) -> Result<()> {
    let header = serde_json::to_vec(kernel)?;
    w.write_all(KERNEL_MAGIC)?;
    w.write_all(&(header.len() as u32).to_le_bytes())?;
    w.write_all(&header)?;
    for b in &kernel.blocks {
        let mut buf = Vec::with_capacity(16 * b.coeffs.len());
        for c in &b.coeffs {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_kernel<R: Read>(mut r: R) -> Result<PerturbationKernel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != KERNEL_MAGIC {
        return Err(Error::Format("not a kernel file".into()));
    }
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
    r.read_exact(&mut header)?;
    let mut kernel: PerturbationKernel = serde_json::from_slice(&header)?;
    for b in &mut kernel.blocks {
        let count = (2 * b.m_max + 1) * (2 * b.n_max + 1);
        let mut raw = vec![0u8; 16 * count];
        r.read_exact(&mut raw)?;
        b.coeffs = raw
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().expect("8 bytes"));
                let im = f64::from_le_bytes(c[8..].try_into().expect("8 bytes"));
                Complex64::new(re, im)
            })
            .collect();
    }
    Ok(kernel)
}

/// Cache file name for a kernel request.
pub fn cache_path(dir: &Path, link: &LinkConfig, pulse: PulseShape, interferers: &[i32], quad: Quadrature) -> PathBuf {
    use sha2::{Digest, Sha256};
    let key = serde_json::json!({
        "link": link.kernel_hash(),
        "gamma": link.gamma_per_w_km,
        "pulse": pulse,
        "interferers": interferers,
        "quad": quad,
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    let hex: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
    dir.join(format!("kernel-{hex}.bin"))
}

/// Load a cached kernel or compute and store it.
pub fn load_or_compute(
    dir: &Path,
    link: &LinkConfig,
    pulse: PulseShape,
    interferers: &[i32],
    quad: Quadrature,
) -> Result<PerturbationKernel> {
    let path = cache_path(dir, link, pulse, interferers, quad);
    if let Ok(f) = std::fs::File::open(&path) {
        if let Ok(k) = read_kernel(std::io::BufReader::new(f)) {
            if k.link_hash == link.kernel_hash() {
                return Ok(k);
            }
        }
    }
    let k = PerturbationKernel::compute(link, pulse, interferers, quad)?;
    std::fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
    write_kernel(&k, &mut w)?;
    w.flush()?;
    drop(w);
    std::fs::rename(tmp, &path)?;
    Ok(k)
}
