use std::fmt;
use std::str::FromStr;

use crate::donsker::DonskerKernel;
use crate::error::{Error, Result};
use crate::geometry::ParamPoint;
use crate::integrand::SimpleFunction;
use crate::kac_stroock::KacStroockKernel;
use crate::parallel::{replicate_map, Workers};
use crate::random::{labels, InnovationLaw, StreamKey};

/// Which approximating kernel drives `X_n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Donsker(InnovationLaw),
    KacStroock,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::Donsker(_) => "donsker",
            KernelFamily::KacStroock => "kac-stroock",
        }
    }

    /// Innovation law label for reports; `-` for Kac-Stroock.
    pub fn law_name(self) -> &'static str {
        match self {
            KernelFamily::Donsker(law) => law.name(),
            KernelFamily::KacStroock => "-",
        }
    }

    /// Sample one kernel for stream `key` and integrate every function against it.
    pub fn integrals(
        self,
        n: u32,
        upper: &ParamPoint,
        fs: &[SimpleFunction],
        key: StreamKey,
    ) -> Result<Vec<f64>> {
        match self {
            KernelFamily::Donsker(law) => {
                let kern = DonskerKernel::sample(n, upper, law, key.with_label(labels::LATTICE))?;
                fs.iter().map(|f| kern.integrate_simple(f)).collect()
            }
            KernelFamily::KacStroock => {
                let kern = KacStroockKernel::sample(n, upper, key.with_label(labels::POISSON))?;
                fs.iter().map(|f| kern.integrate_simple(f)).collect()
            }
        }
    }

    /// `reps` independent replicates of `∫ f θ_n` for each `f`; the outer
    /// vector is indexed by function, the inner by replicate.
    pub fn sample_integrals(
        self,
        n: u32,
        upper: &ParamPoint,
        fs: &[SimpleFunction],
        reps: u64,
        seed: u64,
        workers: Workers,
    ) -> Result<Vec<Vec<f64>>> {
        let key = StreamKey::new(seed, 0, 0);
        let rows = replicate_map(reps, workers, |r| {
            self.integrals(n, upper, fs, key.with_replicate(r))
        })?;
        let mut cols = vec![Vec::with_capacity(reps as usize); fs.len()];
        for row in rows {
            for (col, v) in cols.iter_mut().zip(row) {
                col.push(v);
            }
        }
        Ok(cols)
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    /// `donsker` (Rademacher innovations) or `kac-stroock`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "donsker" => Ok(KernelFamily::Donsker(InnovationLaw::default())),
            "kac-stroock" | "kac_stroock" => Ok(KernelFamily::KacStroock),
            other => Err(Error::domain(format!("unknown kernel family `{other}`"))),
        }
    }
}
