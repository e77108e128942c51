//! Sweep specification in a flat `key = value` file. Lists are comma separated;
//! integer lists also accept `a..b` (half open) and `2^k`.

use std::path::{Path, PathBuf};

use camdp_core::CmdpInstance;

use crate::error::{input, CliError, CliResult};
use crate::fixtures::fixture;
use crate::hardgen::generate;
use crate::solve::{parse_planner, parse_strict_constants, parse_truncation, CellOptions, SolveMode, StructureOverride};

/// Where a sweep gets its instance from.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Fixture(String),
    /// A `hard-gen` parameter string.
    Generator(String),
}

impl InstanceSource {
    /// `fixture:<name>` names a built-in instance; anything else is a path.
    pub fn parse(text: &str) -> Self {
        match text.trim().strip_prefix("fixture:") {
            Some(name) => InstanceSource::Fixture(name.to_string()),
            None => InstanceSource::File(PathBuf::from(text.trim())),
        }
    }

    pub fn load(&self) -> CliResult<CmdpInstance> {
        match self {
            InstanceSource::File(p) => CmdpInstance::load(p)
                .map_err(|e| CliError::Input(format!("cannot load instance {}: {e}", p.display()))),
            InstanceSource::Fixture(name) => fixture(name),
            InstanceSource::Generator(params) => Ok(generate(params)?.instance),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub instance: InstanceSource,
    pub mode: SolveMode,
    pub epsilons: Vec<f64>,
    pub samples: Vec<u64>,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub options: CellOptions,
    pub structure: StructureOverride,
}

impl SweepSpec {
    pub fn new(instance: InstanceSource, mode: SolveMode, epsilons: Vec<f64>, samples: Vec<u64>, seeds: Vec<u64>) -> CliResult<Self> {
        let spec = SweepSpec {
            instance,
            mode,
            epsilons,
            samples,
            seeds,
            out: None,
            options: CellOptions::default(),
            structure: StructureOverride::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.epsilons.is_empty() || self.samples.is_empty() || self.seeds.is_empty() {
            return input("epsilon, samples and seeds must be non-empty");
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return input(format!("epsilon {e} outside (0, 1]"));
        }
        if self.samples.contains(&0) {
            return input("samples per pair must be at least 1");
        }
        if self.options.iteration_cap == 0 {
            return input("t_cap must be at least 1");
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.epsilons.len() * self.samples.len() * self.seeds.len()
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut instance = None;
        let mut mode = SolveMode::Relaxed;
        let (mut epsilons, mut samples, mut seeds) = (None, None, None);
        let mut out = None;
        let mut options = CellOptions::default();
        let mut structure = StructureOverride::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return input(format!("line {}: expected `key = value`", no + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            let at = |e: CliError| CliError::Input(format!("line {}: {key}: {e}", no + 1));
            match key {
                "instance" => set_once(&mut instance, InstanceSource::parse(value), no)?,
                "generator" => set_once(&mut instance, InstanceSource::Generator(value.to_string()), no)?,
                "mode" => mode = value.parse().map_err(at)?,
                "epsilon" => epsilons = Some(float_list(value).map_err(at)?),
                "samples" | "N" => samples = Some(int_list(value).map_err(at)?),
                "seeds" | "seed" => seeds = Some(int_list(value).map_err(at)?),
                "out" => out = Some(PathBuf::from(value)),
                "t_cap" => options.iteration_cap = int(value).map_err(at)?,
                "planner" => options.planner = parse_planner(value).map_err(at)?,
                "strict_constants" => options.strict_constants = parse_strict_constants(value).map_err(at)?,
                "truncation" => options.truncation = parse_truncation(value).map_err(at)?,
                "timing" => options.timing = boolean(value).map_err(at)?,
                "span" | "H" => structure.span = Some(float(value).map_err(at)?),
                "transient" | "B" => structure.transient = Some(float(value).map_err(at)?),
                _ => return input(format!("line {}: unknown key {key:?}", no + 1)),
            }
        }
        let need = |name: &str| CliError::Input(format!("missing key {name:?}"));
        let spec = SweepSpec {
            instance: instance.ok_or_else(|| need("instance"))?,
            mode,
            epsilons: epsilons.ok_or_else(|| need("epsilon"))?,
            samples: samples.ok_or_else(|| need("samples"))?,
            seeds: seeds.ok_or_else(|| need("seeds"))?,
            out,
            options,
            structure,
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, no: usize) -> CliResult<()> {
    if slot.is_some() {
        return input(format!("line {}: instance given twice", no + 1));
    }
    *slot = Some(value);
    Ok(())
}

fn float(s: &str) -> CliResult<f64> {
    s.trim().parse::<f64>().map_err(|_| CliError::Input(format!("not a number: {s:?}")))
}

fn int(s: &str) -> CliResult<u64> {
    let s = s.trim();
    if let Some((base, exp)) = s.split_once('^') {
        let (base, exp): (u64, u32) = (int(base)?, int(exp)? as u32);
        return base.checked_pow(exp).ok_or_else(|| CliError::Input(format!("{s} overflows")));
    }
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    // scientific notation such as 1e5
    let v = float(s)?;
    if v >= 0.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
        Ok(v as u64)
    } else {
        input(format!("not a non-negative integer: {s:?}"))
    }
}

fn boolean(s: &str) -> CliResult<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => input(format!("not a boolean: {other:?}")),
    }
}

pub fn float_list(s: &str) -> CliResult<Vec<f64>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(float).collect()
}

pub fn int_list(s: &str) -> CliResult<Vec<u64>> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        match item.split_once("..") {
            Some((lo, hi)) => {
                let (lo, hi) = (int(lo)?, int(hi)?);
                if lo >= hi {
                    return input(format!("empty range {item:?}"));
                }
                out.extend(lo..hi);
            }
            None => out.push(int(item)?),
        }
    }
    Ok(out)
}
