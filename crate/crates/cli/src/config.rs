//! Line-oriented `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default except `kind`; unknown and repeated keys are rejected.

use std::fmt;
use std::path::Path;

use branchfall_core::pointer::QuadratureRule;
use branchfall_core::PhasePoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Evolve,
    Sieve,
    Branch,
    Sample,
    Explicit,
    Grw,
    Bohm,
    Ehrenfest,
    Reduce,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Evolve,
        Kind::Sieve,
        Kind::Branch,
        Kind::Sample,
        Kind::Explicit,
        Kind::Grw,
        Kind::Bohm,
        Kind::Ehrenfest,
        Kind::Reduce,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Evolve => "evolve",
            Kind::Sieve => "sieve",
            Kind::Branch => "branch",
            Kind::Sample => "sample",
            Kind::Explicit => "explicit",
            Kind::Grw => "grw",
            Kind::Bohm => "bohm",
            Kind::Ehrenfest => "ehrenfest",
            Kind::Reduce => "reduce",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PotentialKind {
    Free,
    Harmonic,
    Quartic,
}

/// A margin that may be `inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Margin(pub f64);

/// A closed interval written `lo, hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span(pub f64, pub f64);

pub trait ConfigValue: Sized {
    fn parse(s: &str) -> Result<Self, String>;
    fn render(&self) -> String;
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{}` is not a number", s.trim()))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{}` is not finite", s.trim()))
    }
}

fn list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|t| !t.is_empty())
}

impl ConfigValue for f64 {
    fn parse(s: &str) -> Result<Self, String> {
        number(s)
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for u64 {
    fn parse(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|_| format!("`{}` is not a non-negative integer", s.trim()))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for usize {
    fn parse(s: &str) -> Result<Self, String> {
        s.trim().parse().map_err(|_| format!("`{}` is not a non-negative integer", s.trim()))
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for bool {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(format!("`{other}` is not true or false")),
        }
    }
    fn render(&self) -> String {
        self.to_string()
    }
}

impl ConfigValue for String {
    fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            Err("empty value".into())
        } else {
            Ok(s.to_string())
        }
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl ConfigValue for Kind {
    fn parse(s: &str) -> Result<Self, String> {
        let s = s.trim();
        Kind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Kind::ALL.iter().map(|k| k.name()).collect();
            format!("unknown experiment `{s}`; expected one of {}", names.join(", "))
        })
    }
    fn render(&self) -> String {
        self.name().into()
    }
}

impl ConfigValue for PotentialKind {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "free" => Ok(PotentialKind::Free),
            "harmonic" => Ok(PotentialKind::Harmonic),
            "quartic" => Ok(PotentialKind::Quartic),
            other => Err(format!("unknown potential `{other}`; expected free, harmonic or quartic")),
        }
    }
    fn render(&self) -> String {
        match self {
            PotentialKind::Free => "free",
            PotentialKind::Harmonic => "harmonic",
            PotentialKind::Quartic => "quartic",
        }
        .into()
    }
}

impl ConfigValue for QuadratureRule {
    fn parse(s: &str) -> Result<Self, String> {
        match s.trim() {
            "midpoint" => Ok(QuadratureRule::Midpoint),
            "gauss_legendre" => Ok(QuadratureRule::GaussLegendre),
            other => Err(format!("unknown quadrature `{other}`; expected midpoint or gauss_legendre")),
        }
    }
    fn render(&self) -> String {
        match self {
            QuadratureRule::Midpoint => "midpoint",
            QuadratureRule::GaussLegendre => "gauss_legendre",
        }
        .into()
    }
}

impl ConfigValue for Margin {
    fn parse(s: &str) -> Result<Self, String> {
        if s.trim() == "inf" {
            return Ok(Margin(f64::INFINITY));
        }
        let v = number(s)?;
        if v > 0.0 {
            Ok(Margin(v))
        } else {
            Err("margin must be positive or `inf`".into())
        }
    }
    fn render(&self) -> String {
        if self.0.is_infinite() {
            "inf".into()
        } else {
            self.0.to_string()
        }
    }
}

impl ConfigValue for Span {
    fn parse(s: &str) -> Result<Self, String> {
        let v: Vec<f64> = list(s).map(number).collect::<Result<_, _>>()?;
        match v[..] {
            [lo, hi] if lo < hi => Ok(Span(lo, hi)),
            [_, _] => Err("interval must have lo < hi".into()),
            _ => Err("expected `lo, hi`".into()),
        }
    }
    fn render(&self) -> String {
        format!("{}, {}", self.0, self.1)
    }
}

impl ConfigValue for Vec<f64> {
    fn parse(s: &str) -> Result<Self, String> {
        list(s).map(number).collect()
    }
    fn render(&self) -> String {
        self.iter().map(f64::to_string).collect::<Vec<_>>().join(", ")
    }
}

impl ConfigValue for Vec<PhasePoint> {
    fn parse(s: &str) -> Result<Self, String> {
        list(s)
            .map(|t| {
                let (q, p) = t.split_once(':').ok_or_else(|| format!("`{t}` is not a point `x:p`"))?;
                Ok(PhasePoint::new(number(q)?, number(p)?))
            })
            .collect()
    }
    fn render(&self) -> String {
        self.iter().map(|z| format!("{}:{}", z.q, z.p)).collect::<Vec<_>>().join(", ")
    }
}

macro_rules! config_keys {
    ($( $(#[doc = $doc:literal])+ $name:ident : $ty:ty = $default:expr; )*) => {
        /// Every experiment parameter; see [`KEYS`] for the documented list.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $( $(#[doc = $doc])+ pub $name: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                RunConfig { $( $name: $default, )* }
            }
        }

        /// `(key, description)` in documentation order.
        pub const KEYS: &[(&str, &str)] = &[ $( (stringify!($name), concat!($($doc),+)) ),* ];

        impl RunConfig {
            fn set(&mut self, key: &str, value: &str) -> Option<Result<(), String>> {
                match key {
                    $( stringify!($name) => Some(<$ty as ConfigValue>::parse(value).map(|v| self.$name = v)), )*
                    _ => None,
                }
            }

            /// Resolved `(key, value)` pairs, defaults included.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![ $( (stringify!($name), self.$name.render()) ),* ]
            }
        }
    };
}

config_keys! {
    /// Experiment: evolve, sieve, branch, sample, explicit, grw, bohm, ehrenfest or reduce.
    kind: Kind = Kind::Evolve;
    /// Master seed for every random stream.
    master_seed: u64 = 0;
    /// Parent directory of the run directories.
    output_dir: String = "runs".into();
    /// Grid points.
    grid_n: usize = 128;
    /// The grid spans [-grid_half_width, grid_half_width).
    grid_half_width: f64 = 16.0;
    /// Particle mass M.
    mass: f64 = 1.0;
    /// Potential: free, harmonic or quartic.
    potential: PotentialKind = PotentialKind::Harmonic;
    /// Harmonic frequency ω, with V = ½Mω²x².
    omega: f64 = 1.0;
    /// Quartic V = a·x² + b·x⁴: the coefficient a.
    quartic_a: f64 = -0.5;
    /// Quartic V = a·x² + b·x⁴: the coefficient b.
    quartic_b: f64 = 0.05;
    /// Caldeira-Leggett decoherence strength Λ.
    lambda: f64 = 0.1;
    /// Integrator substep.
    dt_int: f64 = 0.01;
    /// Positivity check every this many records; 0 disables it.
    positivity_every: usize = 10;
    /// Initial packet centre, position.
    x0: f64 = 2.0;
    /// Initial packet centre, momentum.
    p0: f64 = 0.0;
    /// Coherent-state width, for the initial packet and the POVM.
    sigma_x: f64 = std::f64::consts::FRAC_1_SQRT_2;
    /// Evolution time for evolve, grw, bohm and ehrenfest.
    total_time: f64 = 2.0;
    /// Recording interval.
    record_every: f64 = 0.1;
    /// Sieve: packet widths to scan.
    sigma_list: Vec<f64> = vec![0.4, 0.5, 0.6, 0.8, 1.0, 1.2];
    /// Sieve: time at which widths are ranked.
    sieve_horizon: f64 = 6.0;
    /// Partition cell side in x.
    cell_x: f64 = 2.25;
    /// Partition cell side in p.
    cell_p: f64 = 2.25;
    /// Partition window in x, `lo, hi`.
    window_x: Span = Span(-9.0, 9.0);
    /// Partition window in p, `lo, hi`.
    window_p: Span = Span(-6.75, 6.75);
    /// Quadrature nodes per cell side.
    quadrature_n: usize = 4;
    /// Quadrature rule: midpoint or gauss_legendre.
    quadrature_rule: QuadratureRule = QuadratureRule::Midpoint;
    /// Interval between collapses (branch, sample, reduce).
    collapse_dt: f64 = 0.5;
    /// Number of collapses (branch, sample).
    n_collapses: usize = 4;
    /// Branches with |W| below this are pruned.
    prune_epsilon: f64 = 1e-3;
    /// Largest escape weight tolerated per leaf.
    escape_tolerance: f64 = 0.01;
    /// Hard cap on live leaves.
    leaf_cap: usize = 4096;
    /// Trajectories (sample, and reduce per start point).
    n_traj: usize = 200;
    /// Explicit and bohm: packet centres `x:p` superposed with equal amplitude; empty means the single packet at (x0, p0).
    packets: Vec<PhasePoint> = Vec::new();
    /// Explicit model: qubit couplings, one per qubit.
    couplings: Vec<f64> = vec![0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65];
    /// Explicit model: keep the system Hamiltonian.
    system_hamiltonian: bool = true;
    /// Explicit model: Trotter step.
    explicit_dt: f64 = 0.01;
    /// Explicit model: number of Trotter steps.
    explicit_steps: usize = 100;
    /// Explicit model: positions whose environment states are compared.
    probes: Vec<f64> = vec![-2.0, 2.0];
    /// Explicit model: bin edges of the history projectors.
    history_edges: Vec<f64> = vec![0.0];
    /// Explicit model: projections per history.
    history_steps: usize = 2;
    /// Explicit model: time between history projections.
    history_dt: f64 = 0.5;
    /// GRW hit rate.
    hit_rate: f64 = 1.0;
    /// GRW localisation width r_C.
    r_c: f64 = 1.0;
    /// GRW runs.
    n_runs: usize = 100;
    /// Bohm: particles sampled from |ψ|².
    n_particles: usize = 2000;
    /// Bohm: guidance-equation step.
    ode_dt: f64 = 0.005;
    /// Bohm: equivariance checkpoint every this many records.
    checkpoint_every: usize = 5;
    /// Position margin δ_X (number or inf).
    delta_x: Margin = Margin(1.0);
    /// Momentum margin δ_P (number or inf).
    delta_p: Margin = Margin(1.0);
    /// Reduce: classical-tracking horizon τ_c.
    tau_c: f64 = std::f64::consts::TAU;
    /// Reduce: start points `x:p`.
    d_c: Vec<PhasePoint> = vec![PhasePoint::new(2.0, 0.0)];
    /// Reduce: allowed failure probability ε.
    epsilon: f64 = 0.05;
    /// Reduce: classical integrator step.
    dt_cl: f64 = 1e-3;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn at(line: usize, message: impl Into<String>) -> ConfigError {
    ConfigError { line: Some(line), message: message.into() }
}

fn suggestion(key: &str) -> Option<&'static str> {
    KEYS.iter()
        .map(|(k, _)| (*k, strsim::damerau_levenshtein(key, k)))
        .filter(|&(_, d)| d <= 2)
        .min_by_key(|&(_, d)| d)
        .map(|(k, _)| k)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let n = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| at(n, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(at(n, format!("key `{key}` given twice")));
            }
            match cfg.set(key, value) {
                None => {
                    let hint = suggestion(key).map(|k| format!(" (did you mean `{k}`?)")).unwrap_or_default();
                    return Err(at(n, format!("unknown key `{key}`{hint}")));
                }
                Some(Err(e)) => return Err(at(n, format!("`{key}`: {e}"))),
                Some(Ok(())) => seen.push(key),
            }
        }
        if !seen.contains(&"kind") {
            return Err(ConfigError { line: None, message: "missing required key `kind`".into() });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    /// The resolved configuration in the input format; parsing it back
    /// gives the same config.
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let c = RunConfig::parse("kind = evolve\nlambda = 0.3\n").unwrap();
        assert_eq!(c.kind, Kind::Evolve);
        assert_eq!(c.lambda, 0.3);
        assert_eq!(c.grid_n, 128);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let c = RunConfig::parse("# header\n\n  kind = sieve  \n# lambda = 9\n").unwrap();
        assert_eq!(c.kind, Kind::Sieve);
        assert_eq!(c.lambda, 0.1);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = RunConfig::parse("kind = evolve\nlamda = 0.1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.message.contains("`lamda`"));
        assert!(e.message.contains("did you mean `lambda`"));
    }

    #[test]
    fn repeated_and_missing_keys_are_errors() {
        assert!(RunConfig::parse("kind = evolve\nkind = sieve\n").is_err());
        assert!(RunConfig::parse("lambda = 0.1\n").unwrap_err().message.contains("kind"));
        assert!(RunConfig::parse("kind = evolve\nnonsense\n").is_err());
    }

    #[test]
    fn values_are_type_checked() {
        assert!(RunConfig::parse("kind = evolve\ngrid_n = 1.5\n").is_err());
        assert!(RunConfig::parse("kind = evolve\nlambda = nan\n").is_err());
        assert!(RunConfig::parse("kind = walk\n").is_err());
        assert!(RunConfig::parse("kind = reduce\nwindow_x = 3, 1\n").is_err());
        assert!(RunConfig::parse("kind = reduce\nd_c = 1, 2\n").is_err());
    }

    #[test]
    fn lists_points_and_margins_parse() {
        let c = RunConfig::parse("kind = reduce\nd_c = 0.5:0, 0:-10\ndelta_x = inf\nsigma_list = 1, 2,3\n").unwrap();
        assert_eq!(c.d_c, vec![PhasePoint::new(0.5, 0.0), PhasePoint::new(0.0, -10.0)]);
        assert!(c.delta_x.0.is_infinite());
        assert_eq!(c.sigma_list, vec![1.0, 2.0, 3.0]);
        assert!(RunConfig::parse("kind = reduce\ndelta_p = 0\n").is_err());
    }

    #[test]
    fn rendered_text_round_trips() {
        let c = RunConfig::parse("kind = bohm\npackets = -3:1, 3:-1\ndelta_p = inf\nlambda = 0.123456789\n").unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(RunConfig::parse(&RunConfig::default().to_text()).unwrap(), RunConfig::default());
    }

    proptest::proptest! {
        #[test]
        fn arbitrary_values_round_trip(
            lambda in 0.0f64..1e3,
            x0 in -1e6f64..1e6,
            seed in proptest::prelude::any::<u64>(),
            grid_n in 2usize..4096,
            sigmas in proptest::collection::vec(1e-3f64..10.0, 1..8),
            d_c in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..4),
        ) {
            let c = RunConfig {
                lambda,
                x0,
                master_seed: seed,
                grid_n,
                sigma_list: sigmas,
                d_c: d_c.into_iter().map(|(q, p)| PhasePoint::new(q, p)).collect(),
                ..RunConfig::default()
            };
            proptest::prop_assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn every_key_is_documented() {
        assert_eq!(KEYS.len(), RunConfig::default().entries().len());
        assert!(KEYS.iter().all(|(_, d)| !d.is_empty()));
    }
}
