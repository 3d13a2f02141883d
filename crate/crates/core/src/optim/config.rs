use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fisher::FisherState;
use crate::linalg::{SqrtMethod, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    Adam,
    Sngd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sngd => "sngd",
        }
    }

    pub fn default_lr(self) -> f64 {
        match self {
            OptimizerKind::Adam => 1e-3,
            _ => 0.1,
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            "adam" => Ok(OptimizerKind::Adam),
            "sngd" => Ok(OptimizerKind::Sngd),
            other => Err(Error::Optimizer(format!(
                "unknown optimizer '{other}' (expected sgd, sgd_momentum, adam or sngd)"
            ))),
        }
    }
}

/// Fisher schedule and solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SngdConfig {
    /// Steps between Fisher refreshes; `None` never refreshes.
    pub fisher_interval: Option<usize>,
    pub lambda: f64,
    pub rho: f64,
    pub sqrt_method: SqrtMethod,
    pub sqrt_tol: f64,
    pub sqrt_max_iter: usize,
    /// Momentum applied to the `W′` step; 0 is plain gradient descent.
    pub momentum: f64,
}

impl Default for SngdConfig {
    fn default() -> Self {
        Self {
            fisher_interval: Some(1),
            lambda: FisherState::DEFAULT_LAMBDA,
            rho: FisherState::DEFAULT_RHO,
            sqrt_method: SqrtMethod::NewtonSchulz,
            sqrt_tol: DEFAULT_TOL,
            sqrt_max_iter: DEFAULT_MAX_ITER,
            momentum: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Used by `sgd_momentum` only.
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub sngd: SngdConfig,
}

impl OptimizerConfig {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;

    /// Defaults for `kind`.
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            lr: kind.default_lr(),
            momentum: Self::DEFAULT_MOMENTUM,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sngd: SngdConfig::default(),
        }
    }

    /// Momentum actually used by the gradient-descent step of this kind.
    pub fn effective_momentum(&self) -> f64 {
        match self.kind {
            OptimizerKind::Sgd | OptimizerKind::Adam => 0.0,
            OptimizerKind::SgdMomentum => self.momentum,
            OptimizerKind::Sngd => self.sngd.momentum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Optimizer(format!("{what} out of range: {v}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", self.lr);
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum", self.momentum);
        }
        for (name, v) in [
            ("adam.beta1", self.adam_beta1),
            ("adam.beta2", self.adam_beta2),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(name, v);
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return bad("adam.eps", self.adam_eps);
        }
        let s = &self.sngd;
        if s.fisher_interval == Some(0) {
            return Err(Error::Optimizer(
                "sngd.fisher_interval must be at least 1".into(),
            ));
        }
        if !(s.lambda >= 0.0 && s.lambda.is_finite()) {
            return bad("sngd.lambda", s.lambda);
        }
        if !(0.0..1.0).contains(&s.rho) {
            return bad("sngd.rho", s.rho);
        }
        if !(s.sqrt_tol > 0.0 && s.sqrt_tol < 1.0) {
            return bad("sngd.sqrt_tol", s.sqrt_tol);
        }
        if s.sqrt_max_iter == 0 {
            return Err(Error::Optimizer(
                "sngd.sqrt_max_iter must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&s.momentum) {
            return bad("sngd.momentum", s.momentum);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_defaults() {
        assert_eq!(OptimizerConfig::new(OptimizerKind::SgdMomentum).lr, 0.1);
        assert_eq!(OptimizerConfig::new(OptimizerKind::Sngd).lr, 0.1);
        assert_eq!(OptimizerConfig::new(OptimizerKind::Adam).lr, 0.001);
        let c = OptimizerConfig::new(OptimizerKind::Sngd);
        assert_eq!(c.momentum, 0.9);
        assert_eq!(c.effective_momentum(), 0.0);
        assert_eq!(c.sngd.fisher_interval, Some(1));
        assert_eq!(c.sngd.sqrt_method, SqrtMethod::NewtonSchulz);
        assert_eq!((c.sngd.lambda, c.sngd.rho), (1e-3, 0.9));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn names_round_trip() {
        for k in [
            OptimizerKind::Sgd,
            OptimizerKind::SgdMomentum,
            OptimizerKind::Adam,
            OptimizerKind::Sngd,
        ] {
            assert_eq!(k.as_str().parse::<OptimizerKind>().unwrap(), k);
        }
        assert!("radam".parse::<OptimizerKind>().is_err());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = OptimizerConfig::new(OptimizerKind::Sngd);
        c.lr = 0.0;
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::new(OptimizerKind::Sngd);
        c.sngd.fisher_interval = Some(0);
        assert!(c.validate().is_err());
        let mut c = OptimizerConfig::new(OptimizerKind::Adam);
        c.adam_beta2 = 1.0;
        assert!(c.validate().is_err());
    }
}
