//! Batch experiment runner. Every subcommand takes `--seed`, `--format`,
//! `--tolerance` and `--config`; equal arguments give byte-identical output.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage, parse or
//! precondition error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::channels::{parse_channel_spec, NONZERO_TOL};
use crate::commutators::{bloch_commutator, commuting_constraint_check, WitnessCase};
use crate::discord::{discord, DiscordConfig};
use crate::error::{Error, Result};
use crate::qcp::{self, QcpConfig, TheoremConfig, WitnessConfig, WitnessStrategy};
use crate::states::{DensityMatrix, TwoQubitBloch};

#[derive(Parser, Debug)]
#[command(
    name = "qcp",
    version,
    about = "Quantum-correlating power of local channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Discord of a two-party state file, measured on one party.
    Discord {
        /// State file: {"dims": [dA, dB], "matrix": ...}
        #[arg(long)]
        state: Option<PathBuf>,
        /// Index of the measured party (0 or 1).
        #[arg(long)]
        measured: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the quantum-correlating power of a channel.
    Qcp {
        /// Channel spec, e.g. `mp:std2`, `pd:0.5`, `pauli:0.7,0.1,0.1,0.1`.
        #[arg(long)]
        channel: Option<String>,
        /// Number of classical-quantum terms (defaults to the input dimension).
        #[arg(long)]
        n_terms: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Search for commuting inputs whose outputs under Λ₁⊗Λ₂ do not commute.
    Superactivation {
        #[arg(long)]
        channel1: Option<String>,
        #[arg(long)]
        channel2: Option<String>,
        /// product | bell | bloch | sampler | all
        #[arg(long)]
        strategy: Option<String>,
        /// Sampler draws.
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one of the theorem checks or demos.
    Verify {
        /// 1 | 2 | 3 | 4 | genuine | phase-damping
        #[arg(long)]
        theorem: Option<String>,
        #[arg(long)]
        channel1: Option<String>,
        #[arg(long)]
        channel2: Option<String>,
        /// Channel parameter for the demos (a or p).
        #[arg(long)]
        param: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Bloch decomposition of the commutator of two two-qubit states.
    Commutator {
        /// Built-in pair: bell | case1 | case2 | case3
        #[arg(long)]
        pair: Option<String>,
        /// Comma-separated pair parameters (`r,n,t` or `r,t`).
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        state1: Option<PathBuf>,
        #[arg(long)]
        state2: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Parse a channel spec and print its structure.
    Spec {
        #[arg(long)]
        channel: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Seed for every random choice.
    #[arg(long)]
    seed: Option<u64>,
    /// Output format.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Threshold override for the subcommand's pass/zero decision.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Optimiser restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// `key = value` file using the flag names; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Add wall-clock runtime to the report (breaks byte-identity).
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format `{s}`")),
        }
    }
}

const CONFIG_KEYS: &[&str] = &[
    "seed",
    "format",
    "tolerance",
    "restarts",
    "timing",
    "state",
    "measured",
    "channel",
    "n-terms",
    "channel1",
    "channel2",
    "strategy",
    "trials",
    "theorem",
    "param",
    "pair",
    "params",
    "state1",
    "state2",
];

/// Values read from a `--config` file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = k.trim().replace('_', "-");
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "line {}: unknown key `{}`",
                    n + 1,
                    k.trim()
                )));
            }
            values.insert(key, v.trim().trim_matches('"').to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("malformed value `{v}` for `{key}`"))),
        }
    }
}

/// Settings after merging flags over the config file over defaults.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub format: Format,
    pub tolerance: Option<f64>,
    pub restarts: Option<usize>,
    pub timing: bool,
}

struct Ctx {
    run: RunConfig,
    file: FileConfig,
}

impl Ctx {
    fn new(common: &Common) -> Result<Self> {
        let file = match &common.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let run = RunConfig {
            seed: common.seed.or(file.get("seed")?).unwrap_or(0),
            format: common
                .format
                .or(file.get("format")?)
                .unwrap_or(Format::Json),
            tolerance: common.tolerance.or(file.get("tolerance")?),
            restarts: common.restarts.or(file.get("restarts")?),
            timing: common.timing || file.get("timing")?.unwrap_or(false),
        };
        if let Some(t) = run.tolerance {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::Config(format!(
                    "tolerance must be a non-negative number, got {t}"
                )));
            }
        }
        Ok(Ctx { run, file })
    }

    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.file.get(key),
        }
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T> {
        self.pick(flag, key)?
            .ok_or_else(|| Error::Config(format!("missing required `--{key}`")))
    }

    fn discord_cfg(&self) -> DiscordConfig {
        let mut cfg = DiscordConfig {
            seed: self.run.seed,
            ..DiscordConfig::default()
        };
        if let Some(r) = self.run.restarts {
            cfg.restarts = r;
        }
        cfg
    }

    fn qcp_cfg(&self) -> QcpConfig {
        let mut cfg = QcpConfig::default().with_seed(self.run.seed);
        if let Some(r) = self.run.restarts {
            cfg.restarts = r;
        }
        cfg
    }
}

/// What the process should print and return.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                Outcome {
                    code: 2,
                    stdout: String::new(),
                    stderr: text,
                }
            } else {
                Outcome {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    match execute(cli.command) {
        Ok((code, stdout)) => Outcome {
            code,
            stdout,
            stderr: String::new(),
        },
        Err(e) => Outcome {
            code: 2,
            stdout: String::new(),
            stderr: format!("error: {e}\n"),
        },
    }
}

fn execute(cmd: Command) -> Result<(i32, String)> {
    let start = Instant::now();
    let (ctx, mut report, passed) = match cmd {
        Command::Discord {
            state,
            measured,
            common,
        } => {
            let ctx = Ctx::new(&common)?;
            let r = run_discord(&ctx, state, measured)?;
            (ctx, r, true)
        }
        Command::Qcp {
            channel,
            n_terms,
            common,
        } => {
            let ctx = Ctx::new(&common)?;
            let r = run_qcp(&ctx, channel, n_terms)?;
            (ctx, r, true)
        }
        Command::Superactivation {
            channel1,
            channel2,
            strategy,
            trials,
            common,
        } => {
            let ctx = Ctx::new(&common)?;
            let r = run_superactivation(&ctx, channel1, channel2, strategy, trials)?;
            (ctx, r, true)
        }
        Command::Verify {
            theorem,
            channel1,
            channel2,
            param,
            trials,
            common,
        } => {
            let ctx = Ctx::new(&common)?;
            let (r, passed) = run_verify(&ctx, theorem, channel1, channel2, param, trials)?;
            (ctx, r, passed)
        }
        Command::Commutator {
            pair,
            params,
            state1,
            state2,
            common,
        } => {
            let ctx = Ctx::new(&common)?;
            let r = run_commutator(&ctx, pair, params, state1, state2)?;
            (ctx, r, true)
        }
        Command::Spec { channel, common } => {
            let ctx = Ctx::new(&common)?;
            let r = run_spec(&ctx, channel)?;
            (ctx, r, true)
        }
    };
    if ctx.run.timing {
        if let Value::Object(m) = &mut report {
            m.insert(
                "runtime_ms".into(),
                json!(start.elapsed().as_millis() as u64),
            );
        }
    }
    let text = match ctx.run.format {
        Format::Json => serde_json::to_string_pretty(&report)? + "\n",
        Format::Csv => to_csv(&report),
    };
    Ok((if passed { 0 } else { 1 }, text))
}

fn object(v: impl Serialize) -> Result<Map<String, Value>> {
    match serde_json::to_value(v)? {
        Value::Object(m) => Ok(m),
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            Ok(m)
        }
    }
}

fn run_discord(ctx: &Ctx, state: Option<PathBuf>, measured: Option<usize>) -> Result<Value> {
    let path: PathBuf = ctx.require(state, "state")?;
    let measured = ctx.pick(measured, "measured")?.unwrap_or(0);
    let rho = DensityMatrix::from_file(&path)?;
    let r = discord(&rho, measured, &ctx.discord_cfg())?;
    let tol = ctx.run.tolerance.unwrap_or(1e-6);
    let mut m = object(&r)?;
    m.insert("measured".into(), json!(measured));
    m.insert("seed".into(), json!(ctx.run.seed));
    m.insert("tolerance".into(), json!(tol));
    m.insert("classical".into(), json!(r.value <= tol));
    Ok(Value::Object(m))
}

fn run_qcp(ctx: &Ctx, channel: Option<String>, n_terms: Option<usize>) -> Result<Value> {
    let spec: String = ctx.require(channel, "channel")?;
    let c = parse_channel_spec(&spec)?;
    let mut cfg = ctx.qcp_cfg();
    cfg.n_terms = ctx.pick(n_terms, "n-terms")?;
    let est = qcp::qcp_estimate(&c, &cfg)?;
    let tol = ctx.run.tolerance.unwrap_or(1e-6);
    let mut m = object(&est)?;
    m.insert("channel".into(), json!(c.label()));
    m.insert("seed".into(), json!(ctx.run.seed));
    m.insert("tolerance".into(), json!(tol));
    m.insert("zero_qcp".into(), json!(est.value <= tol));
    Ok(Value::Object(m))
}

fn witness_cfg(ctx: &Ctx, trials: Option<usize>) -> Result<WitnessConfig> {
    let mut cfg = WitnessConfig {
        seed: ctx.run.seed,
        discord: ctx.discord_cfg(),
        nonzero_tol: ctx.run.tolerance.unwrap_or(NONZERO_TOL),
        ..WitnessConfig::default()
    };
    if let Some(t) = ctx.pick(trials, "trials")? {
        cfg.trials = t;
    }
    Ok(cfg)
}

fn run_superactivation(
    ctx: &Ctx,
    channel1: Option<String>,
    channel2: Option<String>,
    strategy: Option<String>,
    trials: Option<usize>,
) -> Result<Value> {
    let c1 = parse_channel_spec(&ctx.require::<String>(channel1, "channel1")?)?;
    let c2 = parse_channel_spec(&ctx.require::<String>(channel2, "channel2")?)?;
    let strategy = WitnessStrategy::parse(
        &ctx.pick(strategy, "strategy")?
            .unwrap_or_else(|| "all".into()),
    )?;
    let cfg = witness_cfg(ctx, trials)?;
    let w = qcp::superactivation_witness(&c1, &c2, strategy, &cfg)?;
    let mut m = Map::new();
    m.insert("channel1".into(), json!(c1.label()));
    m.insert("channel2".into(), json!(c2.label()));
    m.insert("strategy".into(), serde_json::to_value(strategy)?);
    m.insert("seed".into(), json!(ctx.run.seed));
    m.insert("tolerance".into(), json!(cfg.nonzero_tol));
    m.insert("found".into(), json!(w.is_some()));
    match w {
        Some(w) => {
            m.insert("witness".into(), serde_json::to_value(&w)?);
        }
        None => {
            m.insert("witness".into(), Value::Null);
        }
    }
    Ok(Value::Object(m))
}

fn run_verify(
    ctx: &Ctx,
    theorem: Option<String>,
    channel1: Option<String>,
    channel2: Option<String>,
    param: Option<f64>,
    trials: Option<usize>,
) -> Result<(Value, bool)> {
    let theorem: String = ctx.require(theorem, "theorem")?;
    let chan = |flag: Option<String>, key: &str| -> Result<_> {
        parse_channel_spec(&ctx.require::<String>(flag, key)?)
    };
    let report = match theorem.as_str() {
        "1" | "2" => {
            let (c1, c2) = (chan(channel1, "channel1")?, chan(channel2, "channel2")?);
            let cfg = witness_cfg(ctx, trials)?;
            if theorem == "1" {
                qcp::verify_theorem1(&c1, &c2, &cfg)?
            } else {
                qcp::verify_theorem2(&c1, &c2, &cfg)?
            }
        }
        "3" | "4" => {
            let (c1, c2) = (chan(channel1, "channel1")?, chan(channel2, "channel2")?);
            let mut cfg = TheoremConfig::new(ctx.run.seed);
            cfg.qcp = ctx.qcp_cfg();
            cfg.tolerance = ctx.run.tolerance;
            if theorem == "3" {
                qcp::verify_theorem3(&c1, &c2, &cfg)?
            } else {
                qcp::verify_theorem4(&c1, &c2, &cfg)?
            }
        }
        "genuine" => {
            let a = ctx.pick(param, "param")?.unwrap_or(1.0);
            qcp::genuine_correlation_demo(a, ctx.run.tolerance.unwrap_or(1e-6), &ctx.discord_cfg())?
        }
        "phase-damping" => {
            let p = ctx.pick(param, "param")?.unwrap_or(0.5);
            qcp::phase_damping_demo(
                p,
                ctx.run.tolerance.unwrap_or(NONZERO_TOL),
                &ctx.discord_cfg(),
            )?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown theorem `{other}` (expected 1, 2, 3, 4, genuine or phase-damping)"
            )))
        }
    };
    let passed = report.passed;
    Ok((serde_json::to_value(&report)?, passed))
}

fn run_commutator(
    ctx: &Ctx,
    pair: Option<String>,
    params: Option<String>,
    state1: Option<PathBuf>,
    state2: Option<PathBuf>,
) -> Result<Value> {
    let (s1, s2): (Option<PathBuf>, Option<PathBuf>) =
        (ctx.pick(state1, "state1")?, ctx.pick(state2, "state2")?);
    let mut m = Map::new();
    let (b1, b2) = match (s1, s2) {
        (Some(p1), Some(p2)) => {
            let (x1, x2) = (
                DensityMatrix::from_file(&p1)?,
                DensityMatrix::from_file(&p2)?,
            );
            for x in [&x1, &x2] {
                if x.dims() != [2, 2] {
                    return Err(Error::DimensionMismatch(format!(
                        "expected a two-qubit state, got dims {:?}",
                        x.dims()
                    )));
                }
            }
            (
                TwoQubitBloch::from_operator(x1.matrix()),
                TwoQubitBloch::from_operator(x2.matrix()),
            )
        }
        (None, None) => {
            let name: String = ctx.pick(pair, "pair")?.unwrap_or_else(|| "case1".into());
            let params: Option<String> = ctx.pick(params, "params")?;
            let case = WitnessCase::parse(&name, params.as_deref())?;
            m.insert("pair".into(), serde_json::to_value(case)?);
            case.bloch_pair()
        }
        _ => {
            return Err(Error::Config(
                "`--state1` and `--state2` go together".into(),
            ))
        }
    };
    let bc = bloch_commutator(&b1, &b2);
    let dense = b1.to_operator().commutator(&b2.to_operator())?;
    let tol = ctx.run.tolerance.unwrap_or(1e-10);
    m.insert("seed".into(), json!(ctx.run.seed));
    m.insert("tolerance".into(), json!(tol));
    m.insert("alpha".into(), json!(bc.alpha));
    m.insert("beta".into(), json!(bc.beta));
    m.insert("gamma".into(), json!(bc.gamma));
    m.insert("norm".into(), json!(bc.norm()));
    m.insert("dense_norm".into(), json!(dense.frobenius_norm()));
    m.insert(
        "reconstruction_error".into(),
        json!((&bc.to_operator() - &dense).frobenius_norm()),
    );
    m.insert(
        "constraints_satisfied".into(),
        json!(commuting_constraint_check(&b1, &b2)),
    );
    m.insert("commuting".into(), json!(bc.norm() <= tol));
    Ok(Value::Object(m))
}

fn run_spec(ctx: &Ctx, channel: Option<String>) -> Result<Value> {
    let spec: String = ctx.require(channel, "channel")?;
    let c = parse_channel_spec(&spec)?;
    let tol = ctx.run.tolerance.unwrap_or(1e-10);
    let trials = ctx.run.restarts.unwrap_or(200);
    let mut m = Map::new();
    m.insert("label".into(), json!(c.label()));
    m.insert("d_in".into(), json!(c.d_in()));
    m.insert("d_out".into(), json!(c.d_out()));
    m.insert("kraus_count".into(), json!(c.kraus_ops().len()));
    m.insert("tp_deviation".into(), json!(c.tp_deviation()));
    m.insert("trace_preserving".into(), json!(c.tp_deviation() <= tol));
    m.insert("unital".into(), json!(c.is_unital()));
    m.insert("measure_prepare".into(), json!(c.is_measure_prepare()));
    m.insert(
        "completely_decohering".into(),
        json!(c.is_completely_decohering()),
    );
    m.insert(
        "completely_depolarizing".into(),
        json!(c.is_completely_depolarizing()),
    );
    m.insert("unitary".into(), json!(c.is_unitary_channel()));
    m.insert("isotropic_parameter".into(), json!(c.isotropic_parameter()));
    m.insert(
        "commutativity_preserving".into(),
        json!(
            c.is_commutativity_preserving(trials, ctx.run.seed)
                .preserving
        ),
    );
    m.insert("seed".into(), json!(ctx.run.seed));
    if let Ok(t) = c.transfer_coefficients() {
        m.insert("transfer".into(), json!(t.a));
    }
    if let Ok(ptm) = c.pauli_transfer_matrix() {
        m.insert("pauli_transfer_matrix".into(), json!(ptm));
    }
    m.insert("kraus".into(), serde_json::to_value(c.kraus_ops())?);
    Ok(Value::Object(m))
}

/// Header and one row of the scalar leaves. Nested objects become dotted
/// names; `[{"name", "value"}]` lists become one column per name under the list key; other
/// arrays (matrices, vectors) are left out.
pub fn to_csv(report: &Value) -> String {
    let mut cols: Vec<(String, String)> = Vec::new();
    flatten("", report, &mut cols);
    let quote = |s: &str| {
        if s.contains([',', '"', '\n']) {
            format!("\"{}\"", s.replace('"', "\"\""))
        } else {
            s.to_string()
        }
    };
    let head: Vec<String> = cols.iter().map(|c| quote(&c.0)).collect();
    let row: Vec<String> = cols.iter().map(|c| quote(&c.1)).collect();
    format!("{}\n{}\n", head.join(","), row.join(","))
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                flatten(&key(k), x, out);
            }
        }
        Value::Array(items) => {
            for it in items {
                if let (Some(Value::String(n)), Some(x)) = (it.get("name"), it.get("value")) {
                    if !matches!(x, Value::Array(_) | Value::Object(_)) {
                        flatten(&key(n), x, out);
                    }
                }
            }
        }
        Value::Null => out.push((prefix.to_string(), String::new())),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn go(args: &[&str]) -> Outcome {
        run(std::iter::once("qcp").chain(args.iter().copied()))
    }

    #[test]
    fn config_file_rules() {
        assert_eq!(FileConfig::parse("").unwrap(), FileConfig::default());
        let f = FileConfig::parse("seed = 7\n# note\nformat = csv").unwrap();
        assert_eq!(f.get::<u64>("seed").unwrap(), Some(7));
        assert!(FileConfig::parse("colour = red").is_err());
        assert!(FileConfig::parse("seed 7").is_err());
        assert!(FileConfig::parse("seed = x")
            .unwrap()
            .get::<u64>("seed")
            .is_err());
    }

    #[test]
    fn flags_beat_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.cfg");
        std::fs::write(&p, "seed = 7\nchannel = pd:0.5\n").unwrap();
        let c = p.to_str().unwrap();
        let from_file = go(&["spec", "--config", c]);
        assert_eq!(from_file.code, 0, "{}", from_file.stderr);
        assert!(from_file.stdout.contains("\"seed\": 7"));
        let flag = go(&["spec", "--config", c, "--seed", "3", "--channel", "cd"]);
        assert!(flag.stdout.contains("\"seed\": 3"));
        assert!(flag.stdout.contains("\"label\": \"cd\""));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(go(&["spec", "--channel", "pd:abc"]).code, 2);
        let e = go(&["spec", "--channel", "pd:abc"]).stderr;
        assert!(e.contains("position 3"), "{e}");
        assert_eq!(go(&["nonsense"]).code, 2);
        assert_eq!(go(&["--help"]).code, 0);
        assert_eq!(
            go(&[
                "superactivation",
                "--channel1",
                "mp:std2",
                "--channel2",
                "cd"
            ])
            .code,
            2
        );
        // expected super-activation for identical isotropic pairs is none; a
        // witness threshold above every norm turns a positive case into a failure
        let fail = go(&[
            "verify",
            "--theorem",
            "1",
            "--channel1",
            "cd",
            "--channel2",
            "pd:0.5",
            "--tolerance",
            "10",
        ]);
        assert_eq!(fail.code, 1);
    }

    #[test]
    fn csv_keeps_scalars_only() {
        let v =
            json!({"a": 1, "m": [[1, 2]], "q": [{"name": "x", "value": 0.5}], "o": {"b": "s,t"}});
        assert_eq!(to_csv(&v), "a,o.b,q.x\n1,\"s,t\",0.5\n");
    }

    #[test]
    fn commutator_and_spec_outputs() {
        let out = go(&["commutator", "--pair", "case2", "--params", "0.4,0.3"]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        assert!(v["reconstruction_error"].as_f64().unwrap() < 1e-12);
        assert_eq!(v["constraints_satisfied"], json!(true));
        let csv = go(&["spec", "--channel", "dep:0.5", "--format", "csv"]);
        assert!(csv.stdout.starts_with("commutativity_preserving,"));
        assert!(!csv.stdout.contains("kraus."));
    }
}
