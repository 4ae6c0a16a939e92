//! Parameter checkpoints: a layer-dims header plus the flat parameter vector.
//!
//! JSON form:
//!
//! ```json
//! {"kind": "deterministic", "layer_dims": [2, 32, 2], "params": [0.1, ...]}
//! ```
//!
//! Binary form (all integers and floats little-endian):
//!
//! ```text
//! offset  size        field
//! 0       4           magic "RHCK"
//! 4       2           format version, currently 1
//! 6       1           kind: 0 = deterministic, 1 = gaussian
//! 7       1           reserved, must be 0
//! 8       4           number of layer dims L
//! 12      4 * L       layer dims (u32)
//! ..      8           number of parameters P (u64)
//! ..      8 * P       parameters (f64)
//! ```

use serde::{Deserialize, Serialize};

use super::mlp::validate_dims;
use super::{GaussianPolicy, MlpParams, Parameterized};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"RHCK";
const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Deterministic,
    Gaussian,
}

impl PolicyKind {
    /// Parameter count implied by `layer_dims` for this kind of network.
    pub fn param_count(self, layer_dims: &[usize]) -> Result<usize> {
        validate_dims(layer_dims)?;
        let dense = |w: &[usize]| w[0].checked_mul(w[1]).and_then(|x| x.checked_add(w[1]));
        let overflow = || Error::Parse("layer dims overflow the parameter count".into());
        let n = layer_dims.len();
        match self {
            Self::Deterministic => layer_dims
                .windows(2)
                .try_fold(0usize, |acc, w| dense(w).and_then(|x| acc.checked_add(x)))
                .ok_or_else(overflow),
            Self::Gaussian => {
                let trunk =
                    layer_dims[..n - 1].windows(2).try_fold(0usize, |acc, w| dense(w).and_then(|x| acc.checked_add(x)));
                let head = dense(&layer_dims[n - 2..]);
                trunk
                    .zip(head)
                    .and_then(|(t, h)| h.checked_mul(2).and_then(|h2| t.checked_add(h2)))
                    .ok_or_else(overflow)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub kind: PolicyKind,
    pub layer_dims: Vec<usize>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_mlp(p: &MlpParams) -> Self {
        Self { kind: PolicyKind::Deterministic, layer_dims: p.layer_dims(), params: p.flatten() }
    }

    pub fn from_gaussian(p: &GaussianPolicy) -> Self {
        Self { kind: PolicyKind::Gaussian, layer_dims: p.layer_dims(), params: p.flat_params() }
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.kind.param_count(&self.layer_dims)?;
        if expected != self.params.len() {
            return Err(Error::Parse(format!(
                "checkpoint declares {} parameters for layer dims {:?}, expected {expected}",
                self.params.len(),
                self.layer_dims
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parse("checkpoint contains non-finite parameters".into()));
        }
        Ok(())
    }

    pub fn to_mlp(&self) -> Result<MlpParams> {
        self.validate()?;
        if self.kind != PolicyKind::Deterministic {
            return Err(Error::Parse("checkpoint holds a gaussian policy".into()));
        }
        MlpParams::from_flat(&self.layer_dims, &self.params)
    }

    pub fn to_gaussian(&self) -> Result<GaussianPolicy> {
        self.validate()?;
        if self.kind != PolicyKind::Gaussian {
            return Err(Error::Parse("checkpoint holds a deterministic policy".into()));
        }
        GaussianPolicy::from_flat(&self.layer_dims, &self.params)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        ck.validate()?;
        Ok(ck)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.layer_dims.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(match self.kind {
            PolicyKind::Deterministic => 0,
            PolicyKind::Gaussian => 1,
        });
        out.push(0);
        out.extend_from_slice(&(self.layer_dims.len() as u32).to_le_bytes());
        for &d in &self.layer_dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Parse("bad checkpoint magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
        }
        let kind = match r.take(1)?[0] {
            0 => PolicyKind::Deterministic,
            1 => PolicyKind::Gaussian,
            k => return Err(Error::Parse(format!("unknown policy kind byte {k}"))),
        };
        if r.take(1)?[0] != 0 {
            return Err(Error::Parse("reserved checkpoint byte must be zero".into()));
        }
        let n_dims = u32::from_le_bytes(r.array()?) as usize;
        if n_dims > r.remaining() / 4 {
            return Err(Error::Parse("truncated layer dims".into()));
        }
        let layer_dims =
            (0..n_dims).map(|_| r.array().map(|b| u32::from_le_bytes(b) as usize)).collect::<Result<Vec<_>>>()?;
        let n_params = u64::from_le_bytes(r.array()?);
        if n_params != (r.remaining() / 8) as u64 || !r.remaining().is_multiple_of(8) {
            return Err(Error::Parse(format!(
                "checkpoint declares {n_params} parameters but carries {} trailing bytes",
                r.remaining()
            )));
        }
        let params = (0..n_params).map(|_| r.array().map(f64::from_le_bytes)).collect::<Result<Vec<_>>>()?;
        let ck = Self { kind, layer_dims, params };
        ck.validate()?;
        Ok(ck)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Parse("unexpected end of checkpoint".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice has length N"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use proptest::prelude::*;

    #[test]
    fn param_counts_match_networks() {
        let mut rng = stream(0, 0, 0, Domain::Init);
        let m = MlpParams::init(&[2, 32, 2], &mut rng).unwrap();
        assert_eq!(PolicyKind::Deterministic.param_count(&[2, 32, 2]).unwrap(), m.param_count());
        let g = GaussianPolicy::init(&[2, 32, 32, 1], &mut rng).unwrap();
        assert_eq!(PolicyKind::Gaussian.param_count(&[2, 32, 32, 1]).unwrap(), g.param_count());
    }

    #[test]
    fn binary_and_json_round_trip() {
        let mut rng = stream(1, 0, 0, Domain::Init);
        let g = GaussianPolicy::init(&[2, 4, 1], &mut rng).unwrap();
        let ck = Checkpoint::from_gaussian(&g);
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
        assert_eq!(Checkpoint::from_json(&ck.to_json()).unwrap(), ck);
        assert_eq!(ck.to_gaussian().unwrap(), g);
    }

    #[test]
    fn rejects_mismatched_counts_and_truncation() {
        let ck = Checkpoint { kind: PolicyKind::Deterministic, layer_dims: vec![1, 1], params: vec![1.0, 2.0] };
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let bad = Checkpoint { params: vec![1.0], ..ck };
        assert!(Checkpoint::from_bytes(&bad.to_bytes()).is_err());
        assert!(Checkpoint::from_json(r#"{"kind":"deterministic","layer_dims":[1,1],"params":[1]}"#).is_err());
    }

    proptest! {
        #[test]
        fn decoding_arbitrary_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = Checkpoint::from_bytes(&bytes);
        }

        #[test]
        fn mlp_round_trip(dims in proptest::collection::vec(1usize..5, 2..5), seed in any::<u64>()) {
            let m = MlpParams::init(&dims, &mut stream(seed, 0, 0, Domain::Init)).unwrap();
            let ck = Checkpoint::from_mlp(&m);
            prop_assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap().to_mlp().unwrap(), m);
        }
    }
}
