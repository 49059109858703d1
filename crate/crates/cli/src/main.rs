use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hyponorm::{
    build_truncated, form_parts, oracle_crosscheck, operator_norm, rayleigh_kappa, spectrum_scan, threshold,
    BandedOperator, CoefficientVector, ConstantChain, Jacobi, Measure, MomentForm, MomentMethod, Moments, Params,
    Policy, ProviderOptions, VariationalForm,
};
use num_complex::Complex;
use serde_json::{json, Value};

const SCHEMA: u32 = 1;

/// Hyponormality of Toeplitz operators with symbol z^n + C|z|^s on weighted
/// Bergman spaces.
///
/// Exit status: 0 on success with a certified result, 2 when the result is
/// uncertified or undecided, 1 on errors. HYPONORM_THREADS caps the number of
/// worker threads.
#[derive(Parser, Debug)]
#[command(name = "hyponorm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Critical constant C_max = 1/||J|| with its bracket (JSON)
    Threshold {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        coefficient: CoefficientArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Output format
        #[arg(long, value_enum, default_value_t = Report::Json)]
        format: Report,
    },
    /// Certified bracket for ||J|| with the truncation trace (JSON)
    Norm {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Output format
        #[arg(long, value_enum, default_value_t = Report::Json)]
        format: Report,
    },
    /// Leading N x N section of J as a band list (k, a_k) or a dense matrix (CSV)
    Matrix {
        #[command(flatten)]
        run: RunArgs,
        /// Section size
        #[arg(long = "N", value_name = "N")]
        size: usize,
        /// Band list (k, a_k) or full matrix
        #[arg(long, value_enum, default_value_t = Layout::Band)]
        format: Layout,
    },
    /// Eigenvalues of the N x N section with chain and outlier flags (CSV)
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        /// Section size
        #[arg(long = "N", value_name = "N")]
        size: usize,
        /// Outlier margin beyond the essential edge [default: 10 * tol]
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Moments gamma_t of the radial measure (CSV)
    Moments {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated exponents
        #[arg(long, value_delimiter = ',', conflicts_with = "grid", required_unless_present = "grid")]
        t: Vec<f64>,
        /// Evenly spaced exponents as start:stop:count
        #[arg(long)]
        grid: Option<Grid>,
    },
    /// Cross-check the norm bracket against the variational quotient (JSON)
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        policy: PolicyArgs,
        /// Output format
        #[arg(long, value_enum, default_value_t = Report::Json)]
        format: Report,
    },
    /// Evaluate the commutator form Q(u, c) for coefficients read from CSV (JSON)
    Form {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        coefficient: CoefficientArgs,
        /// CSV file with header `u`, one coefficient per row starting at index 0
        #[arg(long)]
        u: PathBuf,
        /// Output format
        #[arg(long, value_enum, default_value_t = Report::Json)]
        format: Report,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// area | beta:<b> | atoms:<path> | density:<path> | const:<a>
    #[arg(long, default_value = "area")]
    measure: MeasureArg,
    /// Exponent of z^n (band offset)
    #[arg(long, default_value_t = 1)]
    n: usize,
    /// Exponent of |z|^s
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    /// Target width of the norm bracket
    #[arg(long, default_value = "1e-8")]
    tol: f64,
    /// Rescale atoms or densities to unit mass
    #[arg(long)]
    normalize: bool,
    /// Accept measures that violate the standing hypotheses
    #[arg(long)]
    force: bool,
    /// Evaluate area or beta moments by adaptive quadrature at this tolerance
    #[arg(long)]
    quadrature: Option<f64>,
    /// Write output to this file instead of stdout (only on success)
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoefficientArgs {
    /// Modulus |C| of the coefficient
    #[arg(long, conflicts_with_all = ["c_re", "c_im"])]
    c: Option<f64>,
    /// Real part of C
    #[arg(long)]
    c_re: Option<f64>,
    /// Imaginary part of C
    #[arg(long)]
    c_im: Option<f64>,
}

impl CoefficientArgs {
    fn modulus(&self) -> Option<f64> {
        match (self.c, self.c_re, self.c_im) {
            (Some(c), ..) => Some(c.abs()),
            (None, None, None) => None,
            (None, re, im) => Some(Complex::new(re.unwrap_or(0.0), im.unwrap_or(0.0)).norm()),
        }
    }
}

#[derive(Args, Debug)]
struct PolicyArgs {
    /// Initial section size [default: max(64, 8n)]
    #[arg(long)]
    initial_size: Option<usize>,
    /// Largest chain section tried
    #[arg(long, default_value_t = 1 << 20)]
    max_chain_slots: usize,
    /// Lookahead window length as a multiple of the section length
    #[arg(long, default_value_t = 4)]
    lookahead_factor: usize,
    /// Tolerance on the tail supremum against the asymptote
    #[arg(long, default_value_t = 1e-3)]
    tail_margin: f64,
    /// Use only leading sections for the lower bound
    #[arg(long)]
    no_windows: bool,
    /// Largest entry index probed by far sections
    #[arg(long, default_value_t = 1 << 36)]
    max_window_index: usize,
}

impl PolicyArgs {
    fn policy(&self) -> Policy {
        Policy {
            initial_size: self.initial_size,
            max_chain_slots: self.max_chain_slots,
            lookahead_factor: self.lookahead_factor,
            tail_margin: self.tail_margin,
            window_probes: !self.no_windows,
            max_window_index: self.max_window_index,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Report {
    Json,
    Table,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Layout {
    Band,
    Dense,
}

#[derive(Clone, Debug)]
enum MeasureArg {
    Area,
    Beta(f64),
    Atoms(PathBuf),
    Density(PathBuf),
    Const(f64),
}

impl FromStr for MeasureArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let number = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        match s.split_once(':') {
            None if s == "area" => Ok(Self::Area),
            Some(("beta", v)) => number(v).map(Self::Beta),
            Some(("const", v)) => number(v).map(Self::Const),
            Some(("atoms", p)) => Ok(Self::Atoms(p.into())),
            Some(("density", p)) => Ok(Self::Density(p.into())),
            _ => Err(format!("unknown measure `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Grid {
    start: f64,
    stop: f64,
    count: usize,
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, count] = parts[..] else {
            return Err("expected start:stop:count".into());
        };
        let grid = Grid {
            start: start.parse().map_err(|e| format!("start: {e}"))?,
            stop: stop.parse().map_err(|e| format!("stop: {e}"))?,
            count: count.parse().map_err(|e| format!("count: {e}"))?,
        };
        if grid.count == 0 {
            return Err("count must be positive".into());
        }
        Ok(grid)
    }
}

impl Grid {
    fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.start + step * i as f64).collect()
    }
}

/// Everything the library needs from an operator; lets the mock chain and J share
/// one code path.
trait Operator: BandedOperator<f64> + VariationalForm<f64> {}
impl<T: BandedOperator<f64> + VariationalForm<f64>> Operator for T {}

struct Setup {
    params: Params,
    label: String,
    moments: Option<Arc<Moments>>,
    op: Box<dyn Operator>,
}

impl RunArgs {
    fn moments(&self) -> Result<Option<Moments>> {
        let options = ProviderOptions {
            normalize: self.normalize,
            force: self.force,
            method: match self.quadrature {
                Some(tolerance) => MomentMethod::Quadrature { tolerance },
                None => MomentMethod::ClosedForm,
            },
        };
        let spec = match &self.measure {
            MeasureArg::Const(_) => return Ok(None),
            MeasureArg::Area => Measure::area(),
            MeasureArg::Beta(b) => Measure::beta(*b),
            MeasureArg::Atoms(path) => Measure::atoms_from_csv(open(path)?)?,
            MeasureArg::Density(path) => Measure::density_from_csv(open(path)?)?,
        };
        let provider = Moments::new(spec, options)?;
        if let Some(banner) = provider.banner() {
            eprintln!("warning: {banner}");
        }
        Ok(Some(provider))
    }

    fn setup(&self) -> Result<Setup> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            bail!("--tol must be positive, got {}", self.tol);
        }
        let params = Params::new(self.n, self.s)?;
        let moments = self.moments()?.map(Arc::new);
        let (label, op): (String, Box<dyn Operator>) = match (&self.measure, &moments) {
            (MeasureArg::Const(value), _) => {
                if !(*value > 0.0 && value.is_finite()) {
                    bail!("const:<a> needs a positive entry, got {value}");
                }
                (format!("const:{value}"), Box::new(ConstantChain { band: self.n, value: *value }))
            }
            (_, Some(m)) => (m.measure().describe(), Box::new(Jacobi::new(params, m.clone()))),
            _ => unreachable!("provider exists for every non-constant measure"),
        };
        Ok(Setup { params, label, moments, op })
    }
}

fn open(path: &PathBuf) -> Result<std::fs::File> {
    std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))
}

struct Output {
    text: String,
    certified: bool,
}

fn sci(x: f64) -> String {
    format!("{x:.16e}")
}

fn render(value: Value, format: Report) -> String {
    match format {
        Report::Json => serde_json::to_string_pretty(&value).expect("serializable") + "\n",
        Report::Table => {
            let mut out = String::new();
            if let Value::Object(map) = value {
                let width = map.keys().map(String::len).max().unwrap_or(0);
                for (key, v) in map {
                    if !matches!(v, Value::Array(_)) {
                        let v = match v {
                            Value::String(s) => s,
                            other => other.to_string(),
                        };
                        writeln!(out, "{key:<width$}  {v}").unwrap();
                    }
                }
            }
            out
        }
    }
}

fn header(setup: &Setup, run: &RunArgs) -> serde_json::Map<String, Value> {
    let mut map = serde_json::Map::new();
    map.insert("schema".into(), json!(SCHEMA));
    map.insert("measure".into(), json!(setup.label));
    map.insert("n".into(), json!(setup.params.n()));
    map.insert("s".into(), json!(setup.params.s()));
    map.insert("tol".into(), json!(run.tol));
    map
}

fn cmd_threshold(run: &RunArgs, coefficient: &CoefficientArgs, policy: &PolicyArgs, format: Report) -> Result<Output> {
    let setup = run.setup()?;
    let report = threshold(setup.op.as_ref(), setup.params, run.tol, &policy.policy())?;
    let mut map = header(&setup, run);
    map.insert("c_max".into(), json!(report.c_max));
    map.insert("threshold_lower".into(), json!(report.threshold_lower));
    map.insert("threshold_upper".into(), json!(report.threshold_upper));
    map.insert("norm_lower".into(), json!(report.norm.lower));
    map.insert("norm_upper".into(), json!(report.norm.upper));
    map.insert("certified".into(), json!(report.certified));
    map.insert("status".into(), json!(format!("{:?}", report.norm.status)));
    map.insert("truncation_size".into(), json!(report.norm.truncation_size));
    map.insert("oracle_residual".into(), json!(report.oracle_residual));
    map.insert("banner".into(), json!(report.banner));
    let mut certified = report.certified;
    if let Some(c) = coefficient.modulus() {
        let class = report.classify_modulus(c);
        map.insert("c".into(), json!(c));
        map.insert("classification".into(), json!(class.as_str()));
        certified &= class != hyponorm::Classification::Undecided;
    }
    Ok(Output {
        text: render(Value::Object(map), format),
        certified,
    })
}

fn cmd_norm(run: &RunArgs, policy: &PolicyArgs, format: Report) -> Result<Output> {
    let setup = run.setup()?;
    let est = operator_norm(setup.op.as_ref(), run.tol, &policy.policy())?;
    let mut map = header(&setup, run);
    map.insert("lower".into(), json!(est.lower));
    map.insert("upper".into(), json!(est.upper));
    map.insert("certified".into(), json!(est.certified));
    map.insert("status".into(), json!(format!("{:?}", est.status)));
    map.insert("truncation_size".into(), json!(est.truncation_size));
    map.insert("tail_monotone".into(), json!(est.tail_monotone));
    map.insert("tail_consistent".into(), json!(est.tail_consistent));
    let trace: Vec<Value> = est
        .trace
        .iter()
        .map(|r| json!({"size": r.size, "section_lower": r.section_lower, "lower": r.lower, "upper": r.upper}))
        .collect();
    map.insert("trace".into(), Value::Array(trace));
    Ok(Output {
        text: render(Value::Object(map), format),
        certified: est.certified,
    })
}

fn cmd_matrix(run: &RunArgs, size: usize, layout: Layout) -> Result<Output> {
    let setup = run.setup()?;
    let m = build_truncated(setup.op.as_ref(), size)?;
    let mut text = String::new();
    match layout {
        Layout::Band => {
            text.push_str("k,a_k\n");
            for (k, a) in m.entries().iter().enumerate() {
                writeln!(text, "{k},{}", sci(*a)).unwrap();
            }
        }
        Layout::Dense => {
            let names: Vec<String> = (0..size).map(|j| format!("c{j}")).collect();
            writeln!(text, "{}", names.join(",")).unwrap();
            for row in m.to_dense() {
                let cells: Vec<String> = row.into_iter().map(sci).collect();
                writeln!(text, "{}", cells.join(",")).unwrap();
            }
        }
    }
    Ok(Output { text, certified: true })
}

fn cmd_spectrum(run: &RunArgs, size: usize, margin: Option<f64>) -> Result<Output> {
    let setup = run.setup()?;
    let scan = spectrum_scan(setup.op.as_ref(), size, margin.unwrap_or(10.0 * run.tol))?;
    let mut text = String::from("index,eigenvalue,chain_residue,outlier_flag\n");
    for (i, e) in scan.eigenvalues.iter().enumerate() {
        writeln!(text, "{i},{},{},{}", sci(e.value), e.residue, u8::from(e.outlier)).unwrap();
    }
    Ok(Output { text, certified: true })
}

fn cmd_moments(run: &RunArgs, t: &[f64], grid: Option<Grid>) -> Result<Output> {
    let Some(moments) = run.moments()? else {
        bail!("the constant chain has no moments");
    };
    let points = grid.map_or_else(|| t.to_vec(), |g| g.points());
    let mut text = String::from("t,gamma\n");
    for t in points {
        writeln!(text, "{},{}", sci(t), sci(moments.moment(t)?.value)).unwrap();
    }
    Ok(Output { text, certified: true })
}

fn cmd_verify(run: &RunArgs, policy: &PolicyArgs, format: Report) -> Result<Output> {
    let setup = run.setup()?;
    let est = operator_norm(setup.op.as_ref(), run.tol, &policy.policy())?;
    let residual = oracle_crosscheck(setup.op.as_ref(), &est)?;
    let passed = residual <= 10.0 * run.tol;
    let mut map = header(&setup, run);
    map.insert("lower".into(), json!(est.lower));
    map.insert("upper".into(), json!(est.upper));
    map.insert("kappa".into(), json!(est.lower + residual));
    map.insert("residual".into(), json!(residual));
    map.insert("passed".into(), json!(passed));
    Ok(Output {
        text: render(Value::Object(map), format),
        certified: passed,
    })
}

fn read_coefficients(path: &PathBuf) -> Result<CoefficientVector<f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    if rdr.headers()?.iter().collect::<Vec<_>>() != ["u"] {
        bail!("{}: expected CSV header `u`", path.display());
    }
    let values = rdr
        .records()
        .map(|r| -> Result<f64> { Ok(r?[0].parse::<f64>()?) })
        .collect::<Result<Vec<_>>>()
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(CoefficientVector::dense(values)?)
}

fn cmd_form(run: &RunArgs, coefficient: &CoefficientArgs, u: &PathBuf, format: Report) -> Result<Output> {
    let setup = run.setup()?;
    let c = coefficient.modulus().unwrap_or(0.0);
    let u = read_coefficients(u)?;
    let parts = match &setup.moments {
        Some(m) => form_parts(&MomentForm { provider: m.as_ref(), params: setup.params }, &u)?,
        None => form_parts(setup.op.as_ref(), &u)?,
    };
    let mut map = header(&setup, run);
    map.insert("c".into(), json!(c));
    map.insert("q".into(), json!(parts.value(c)));
    map.insert("q_normalized".into(), json!(parts.normalized(c)));
    map.insert("kappa".into(), json!(rayleigh_kappa(setup.op.as_ref(), &u)?));
    map.insert("nonnegative".into(), json!(parts.normalized(c) >= 0.0));
    Ok(Output {
        text: render(Value::Object(map), format),
        certified: true,
    })
}

fn execute(command: &Command) -> Result<(Output, &RunArgs)> {
    let out = match command {
        Command::Threshold { run, coefficient, policy, format } => (cmd_threshold(run, coefficient, policy, *format)?, run),
        Command::Norm { run, policy, format } => (cmd_norm(run, policy, *format)?, run),
        Command::Matrix { run, size, format } => (cmd_matrix(run, *size, *format)?, run),
        Command::Spectrum { run, size, margin } => (cmd_spectrum(run, *size, *margin)?, run),
        Command::Moments { run, t, grid } => (cmd_moments(run, t, *grid)?, run),
        Command::Verify { run, policy, format } => (cmd_verify(run, policy, *format)?, run),
        Command::Form { run, coefficient, u, format } => (cmd_form(run, coefficient, u, *format)?, run),
    };
    Ok(out)
}

fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("HYPONORM_THREADS") {
        let threads: usize = raw.parse().with_context(|| format!("HYPONORM_THREADS=`{raw}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    configure_threads()?;
    let (out, args) = execute(&cli.command)?;
    match &args.output {
        Some(path) => std::fs::write(path, &out.text).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{}", out.text),
    }
    Ok(out.certified)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
