//! `hard-gen`: lower-bound instances from a `key=value,...` parameter string.
//!
//! `kind=general,S=13,A=3,B=4,epsilon=0.01,zeta=0.25[,s_star=0,a_star=1]`
//! `kind=communicating,S=19,A=4,D=64,epsilon=0.05,zeta=0.25[,k=0,l=1]`

use std::collections::BTreeMap;

use camdp_core::hard::{build_communicating_hard, build_general_master, perturbed_optimum, TreeLayout};
use camdp_core::{CmdpInstance, GeneralHardParams};
use serde::Serialize;

use crate::error::{input, CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct HardMeta {
    pub kind: String,
    pub n_states: usize,
    pub n_actions: usize,
    pub epsilon: f64,
    pub zeta: f64,
    pub threshold: f64,
    /// Dwell time `B` (general kind).
    pub transient: Option<f64>,
    /// Diameter budget (communicating kind).
    pub diameter: Option<f64>,
    pub s_star: Option<usize>,
    pub a_star: Option<usize>,
    pub perturbed_leaf: Option<(usize, usize)>,
    /// Closed-form LP optimum where one is known.
    pub expected_optimum: Option<f64>,
    pub layout: Option<TreeLayout>,
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: CmdpInstance,
    pub meta: HardMeta,
}

fn parse_pairs(params: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for item in params.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((k, v)) = item.split_once('=') else {
            return input(format!("generator parameter {item:?} is not key=value"));
        };
        if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
            return input(format!("generator parameter {k:?} given twice"));
        }
    }
    Ok(map)
}

struct Params(BTreeMap<String, String>);

impl Params {
    fn take<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<Option<T>> {
        match self.0.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| CliError::Input(format!("bad value for {key}: {v:?}"))),
        }
    }

    fn need<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<T> {
        self.take(key)?.ok_or_else(|| CliError::Input(format!("missing generator parameter {key}")))
    }

    fn finish(self) -> CliResult<()> {
        match self.0.keys().next() {
            Some(k) => input(format!("unknown generator parameter {k:?}")),
            None => Ok(()),
        }
    }
}

pub fn generate(params: &str) -> CliResult<Generated> {
    let mut p = Params(parse_pairs(params)?);
    let kind: String = p.take("kind")?.unwrap_or_else(|| "general".to_string());
    let (n_states, n_actions): (usize, usize) = (p.need("S")?, p.need("A")?);
    let (epsilon, zeta): (f64, f64) = (p.need("epsilon")?, p.need("zeta")?);
    match kind.as_str() {
        "general" => {
            let transient: f64 = p.need("B")?;
            let s_star: Option<usize> = p.take("s_star")?;
            let a_star: usize = p.take("a_star")?.unwrap_or(1);
            p.finish()?;
            let gp = GeneralHardParams { n_states, n_actions, transient, epsilon, zeta, s_star, a_star };
            let instance = build_general_master(&gp)?;
            let expected = if s_star.is_some() { perturbed_optimum(epsilon, zeta) } else { 0.25 };
            Ok(Generated {
                meta: HardMeta {
                    kind,
                    n_states,
                    n_actions,
                    epsilon,
                    zeta,
                    threshold: instance.threshold(),
                    transient: Some(transient),
                    diameter: None,
                    s_star,
                    a_star: s_star.map(|_| a_star),
                    perturbed_leaf: None,
                    expected_optimum: Some(expected),
                    layout: None,
                },
                instance,
            })
        }
        "communicating" => {
            let diameter: f64 = p.need("D")?;
            let k: Option<usize> = p.take("k")?;
            let l: Option<usize> = p.take("l")?;
            p.finish()?;
            let leaf = match (k, l) {
                (Some(k), Some(l)) => Some((k, l)),
                (None, None) => None,
                _ => return input("k and l must be given together"),
            };
            let (instance, layout) = build_communicating_hard(n_states, n_actions, diameter, epsilon, zeta, leaf)?;
            Ok(Generated {
                meta: HardMeta {
                    kind,
                    n_states,
                    n_actions,
                    epsilon,
                    zeta,
                    threshold: instance.threshold(),
                    transient: None,
                    diameter: Some(diameter),
                    s_star: None,
                    a_star: None,
                    perturbed_leaf: leaf,
                    expected_optimum: None,
                    layout: Some(layout),
                },
                instance,
            })
        }
        other => input(format!("unknown generator kind {other:?} (general | communicating)")),
    }
}
