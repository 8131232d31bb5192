//! Bit-exact binary snapshots of spectral states.
//!
//! Layout (all little-endian):
//!
//! ```text
//! magic    8 bytes  "CHCBFSNP"
//! version  u32      1
//! dim      u32
//! modes    u32
//! side     f64
//! time     f64
//! fields   u32
//! per field:
//!   name_len u32, name bytes (UTF-8)
//!   comps    u32
//!   per component: N^d pairs (re f64, im f64)
//! ```
//!
//! Coefficients are written in lexicographic wavevector order: `k` runs over
//! `[-N/2, N/2)^d` with the last axis fastest.

use std::io::{Read, Write};

use num_complex::Complex64;

use crate::basis::{DomainSpec, ScalarField, VectorField, WaveVector};
use crate::error::SnapshotError;
use crate::operators::SystemState;

const MAGIC: &[u8; 8] = b"CHCBFSNP";
const VERSION: u32 = 1;

/// A named multi-component field inside a snapshot.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotField {
    pub name: String,
    pub components: Vec<ScalarField>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub domain: DomainSpec,
    pub time: f64,
    pub fields: Vec<SnapshotField>,
}

/// Flat indices in lexicographic wavevector order.
fn lexicographic(domain: &DomainSpec) -> Vec<usize> {
    let half = (domain.modes() / 2) as i64;
    let n = domain.modes() as i64;
    let dim = domain.dim();
    let total = domain.len();
    (0..total)
        .map(|mut i| {
            let mut k = [0i64; 3];
            for axis in (0..dim).rev() {
                k[axis] = (i as i64 % n) - half;
                i /= domain.modes();
            }
            domain
                .index_of(&WaveVector { k })
                .expect("wavevector in range")
        })
        .collect()
}

impl Snapshot {
    pub fn from_state(state: &SystemState, time: f64) -> Self {
        Self {
            domain: *state.domain(),
            time,
            fields: vec![
                SnapshotField {
                    name: "v".into(),
                    components: state.v.components().to_vec(),
                },
                SnapshotField {
                    name: "phi".into(),
                    components: vec![state.phi.clone()],
                },
                SnapshotField {
                    name: "sigma".into(),
                    components: vec![state.sigma.clone()],
                },
            ],
        }
    }

    /// Rebuild `(v, φ, σ)`; fails if any of the three fields is missing.
    pub fn to_state(&self) -> Result<SystemState, SnapshotError> {
        let get = |name: &str| {
            self.fields
                .iter()
                .find(|f| f.name == name)
                .ok_or_else(|| SnapshotError::Format(format!("missing field `{name}`")))
        };
        let v = VectorField::from_components(get("v")?.components.clone())?;
        let phi = get("phi")?.components.first().cloned();
        let sigma = get("sigma")?.components.first().cloned();
        match (phi, sigma) {
            (Some(phi), Some(sigma)) => Ok(SystemState::new(v, phi, sigma)),
            _ => Err(SnapshotError::Format("empty scalar field".into())),
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), SnapshotError> {
        let d = &self.domain;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(d.dim() as u32).to_le_bytes())?;
        w.write_all(&(d.modes() as u32).to_le_bytes())?;
        w.write_all(&d.side_length().to_le_bytes())?;
        w.write_all(&self.time.to_le_bytes())?;
        w.write_all(&(self.fields.len() as u32).to_le_bytes())?;
        let order = lexicographic(d);
        for f in &self.fields {
            w.write_all(&(f.name.len() as u32).to_le_bytes())?;
            w.write_all(f.name.as_bytes())?;
            w.write_all(&(f.components.len() as u32).to_le_bytes())?;
            for c in &f.components {
                for &i in &order {
                    let z = c.coeffs()[i];
                    w.write_all(&z.re.to_le_bytes())?;
                    w.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, SnapshotError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(SnapshotError::Format("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(SnapshotError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let dim = read_u32(&mut r)? as usize;
        let modes = read_u32(&mut r)? as usize;
        let side = read_f64(&mut r)?;
        let time = read_f64(&mut r)?;
        let domain = DomainSpec::new(dim, side, modes)?;
        let order = lexicographic(&domain);
        let nfields = read_u32(&mut r)? as usize;
        let mut fields = Vec::with_capacity(nfields);
        for _ in 0..nfields {
            let len = read_u32(&mut r)? as usize;
            if len > 1 << 16 {
                return Err(SnapshotError::Format("field name too long".into()));
            }
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| SnapshotError::Format("field name is not UTF-8".into()))?;
            let comps = read_u32(&mut r)? as usize;
            if comps > 3 {
                return Err(SnapshotError::Format(format!("{comps} components")));
            }
            let mut components = Vec::with_capacity(comps);
            for _ in 0..comps {
                let mut coeffs = vec![Complex64::new(0.0, 0.0); domain.len()];
                for &i in &order {
                    let re = read_f64(&mut r)?;
                    let im = read_f64(&mut r)?;
                    coeffs[i] = Complex64::new(re, im);
                }
                components.push(ScalarField::from_coeffs(domain, coeffs)?);
            }
            fields.push(SnapshotField { name, components });
        }
        Ok(Self {
            domain,
            time,
            fields,
        })
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32, SnapshotError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64, SnapshotError> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let d = DomainSpec::new(2, 3.0, 6).unwrap();
        let mut s = SystemState::zeros(d);
        s.phi.coeffs_mut()[7] = Complex64::new(0.1 + 1e-17, -3.3e-300);
        s.sigma.coeffs_mut()[0] = Complex64::new(f64::MIN_POSITIVE, 0.0);
        let snap = Snapshot::from_state(&s, 0.125);
        let bytes = snap.to_bytes();
        let back = Snapshot::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, snap);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.to_state().unwrap(), s);
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(Snapshot::read_from(&b"NOTASNAPxxxxxxxx"[..]).is_err());
    }
}
