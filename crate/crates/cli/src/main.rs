use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssf_core::entropy::strip_entropy;
use ssf_core::harness::{
    corrupt, render_csv, run_experiment, sample_admissible, RuleKind, TrialConfig,
};
use ssf_core::sft::{check_ssf, find_safe_symbols, violations, Direction};
use ssf_core::{repair, FillRule, NnSft, Window};

#[derive(Parser)]
#[command(
    name = "ssf",
    version,
    about = "Nearest-neighbor SFTs: fillability checks, repair, experiments, strip entropy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test single-site fillability and list safe symbols; with --window,
    /// also report forbidden pairs in the window.
    Check {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        window: Option<PathBuf>,
    },
    /// Repair a window on the box of radius --size.
    Repair {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        window: PathBuf,
        #[arg(long)]
        size: u32,
        #[command(flatten)]
        rule: RuleArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a locally admissible window on the box of radius --size,
    /// optionally corrupted.
    Sample {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Fraction of sites replaced by uniform symbols.
        #[arg(long, default_value = "0", value_parser = parse_number)]
        corrupt: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded trials and check every inequality; CSV on stdout.
    Verify(VerifyArgs),
    /// Per-site entropy of a horizontal strip via its transfer matrix.
    Entropy {
        #[command(flatten)]
        spec: SpecArg,
        #[arg(long)]
        strip_width: usize,
    },
}

#[derive(Args)]
struct SpecArg {
    /// Built-in name (hardsquare, checkerboard:K, full:Q) or a spec file.
    #[arg(long)]
    spec: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Smallest,
    Random,
}

#[derive(Args)]
struct RuleArgs {
    #[arg(long, value_enum, default_value = "smallest")]
    rule: Rule,
    /// Seed for the random fill rule.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    spec: SpecArg,
    /// Box radius N.
    #[arg(long)]
    size: u32,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Nominal epsilon, decimal or p/q.
    #[arg(long, default_value = "0.015625", value_parser = parse_number)]
    epsilon: f64,
    /// Bound on each perturbation coefficient, decimal or p/q.
    #[arg(long, default_value = "1/384", value_parser = parse_number)]
    cap: f64,
    /// Fraction of sites replaced by uniform symbols.
    #[arg(long, default_value = "0.15", value_parser = parse_number)]
    corrupt: f64,
    /// Number of patterns with a nonzero coefficient.
    #[arg(long, default_value_t = 8)]
    support: usize,
    #[arg(long, value_enum, default_value = "smallest")]
    rule: Rule,
    /// Worker threads; output order does not depend on it.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Run even when 5 * cap exceeds epsilon.
    #[arg(long)]
    allow_out_of_hypothesis: bool,
    /// Also write the CSV table to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn parse_number(s: &str) -> Result<f64, String> {
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            let q: f64 = q.trim().parse().map_err(|e| format!("{s}: {e}"))?;
            if q == 0.0 {
                return Err(format!("{s}: zero denominator"));
            }
            p / q
        }
        None => s.trim().parse().map_err(|e| format!("{s}: {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s}: not a finite number"))
    }
}

/// Failure kinds mapped onto exit codes.
enum Failure {
    Check,
    Input(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_spec(arg: &SpecArg) -> Result<NnSft, Failure> {
    if let Some(b) = NnSft::builtin(&arg.spec) {
        return Ok(b?);
    }
    let text = read(Path::new(&arg.spec))?;
    NnSft::parse(&text).map_err(|e| Failure::Input(format!("{}: {e}", arg.spec)))
}

fn load_window(path: &Path, sft: &NnSft) -> Result<Window, Failure> {
    let w = Window::parse(&read(path)?)
        .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    ssf_core::sft::validate_window(&w, sft)?;
    Ok(w)
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Input(format!("{}: {e}", p.display()))),
        None => Ok(stdout.write_all(text.as_bytes())?),
    }
}

fn fill_rule(rule: Rule, seed: u64) -> FillRule {
    match rule {
        Rule::Smallest => FillRule::Smallest,
        Rule::Random => FillRule::Random { seed },
    }
}

fn check(spec: &SpecArg, window: Option<&Path>, stdout: &mut dyn Write) -> Outcome {
    let sft = load_spec(spec)?;
    let report = check_ssf(&sft);
    let safe: Vec<String> = find_safe_symbols(&sft)
        .iter()
        .map(|s| s.to_string())
        .collect();
    writeln!(stdout, "ssf: {}", report.ssf)?;
    writeln!(stdout, "safe_symbols: [{}]", safe.join(", "))?;
    if let Some(b) = report.witness {
        writeln!(
            stdout,
            "witness: north={} south={} east={} west={}",
            b.north, b.south, b.east, b.west
        )?;
    }
    let mut ok = report.ssf;
    if let Some(path) = window {
        let w = load_window(path, &sft)?;
        let vs = violations(&w, &sft)?;
        writeln!(stdout, "violations: {}", vs.len())?;
        for v in &vs {
            let dir = match v.direction {
                Direction::Horizontal => "horizontal",
                Direction::Vertical => "vertical",
            };
            writeln!(stdout, "  {} {}", v.site, dir)?;
        }
        ok &= vs.is_empty();
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn run_repair(
    spec: &SpecArg,
    window: &Path,
    size: u32,
    rule: &RuleArgs,
    out: Option<&Path>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Outcome {
    let sft = load_spec(spec)?;
    if !check_ssf(&sft).ssf {
        return Err(Failure::Input("spec is not single-site fillable".into()));
    }
    let w = load_window(window, &sft)?;
    let r = repair(&w, &sft, size, fill_rule(rule.rule, rule.seed))?;
    let bad: usize = r.shells.iter().map(|s| s.total_bad).sum();
    let changed = w.diff_sites(&r.window)?.len();
    writeln!(stderr, "repaired N={size} bad={bad} changed={changed}")?;
    emit(&r.window.render(), out, stdout)
}

fn sample(
    spec: &SpecArg,
    size: u32,
    seed: u64,
    rate: f64,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Outcome {
    let sft = load_spec(spec)?;
    if !check_ssf(&sft).ssf {
        return Err(Failure::Input("spec is not single-site fillable".into()));
    }
    let mut w = sample_admissible(&sft, size, seed)?;
    if rate > 0.0 {
        w = corrupt(&w, sft.q(), rate, seed.wrapping_add(1))?;
    }
    emit(&w.render(), out, stdout)
}

fn verify(a: &VerifyArgs, stdout: &mut dyn Write) -> Outcome {
    let sft = load_spec(&a.spec)?;
    let mut cfg = TrialConfig::new(sft, a.size);
    cfg.trials = a.trials;
    cfg.seed = a.seed;
    cfg.epsilon = a.epsilon;
    cfg.cap = a.cap;
    cfg.corrupt_rate = a.corrupt;
    cfg.support = a.support;
    cfg.jobs = a.jobs;
    cfg.allow_out_of_hypothesis = a.allow_out_of_hypothesis;
    cfg.rule = match a.rule {
        Rule::Smallest => RuleKind::Smallest,
        Rule::Random => RuleKind::Random,
    };
    let exp = run_experiment(&cfg)?;
    let csv = render_csv(&exp);
    stdout.write_all(csv.as_bytes())?;
    if let Some(p) = &a.csv {
        emit(&csv, Some(p), stdout)?;
    }
    if exp.summary.all_pass() {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn entropy(spec: &SpecArg, width: usize, stdout: &mut dyn Write) -> Outcome {
    let sft = load_spec(spec)?;
    let e = strip_entropy(&sft, width, 1e-13)?;
    if e.is_empty_subshift() {
        writeln!(
            stdout,
            "empty subshift strip_width {} states {}",
            e.width, e.states
        )?;
    } else {
        writeln!(
            stdout,
            "entropy_per_site {:.12} strip_width {} states {}",
            e.entropy_per_site, e.width, e.states
        )?;
    }
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return e.exit_code() as u8;
        }
    };
    let outcome = match &cli.command {
        Command::Check { spec, window } => check(spec, window.as_deref(), stdout),
        Command::Repair {
            spec,
            window,
            size,
            rule,
            out,
        } => run_repair(spec, window, *size, rule, out.as_deref(), stdout, stderr),
        Command::Sample {
            spec,
            size,
            seed,
            corrupt,
            out,
        } => sample(spec, *size, *seed, *corrupt, out.as_deref(), stdout),
        Command::Verify(a) => verify(a, stdout),
        Command::Entropy { spec, strip_width } => entropy(spec, *strip_width, stdout),
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Check) => 1,
        Err(Failure::Input(msg)) => {
            let _ = writeln!(stderr, "error: {msg}");
            2
        }
    }
}

fn main() -> ExitCode {
    let code = run(
        std::env::args_os(),
        &mut io::stdout().lock(),
        &mut io::stderr().lock(),
    );
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Ran {
        code: u8,
        stdout: String,
        stderr: String,
    }

    fn ssf(args: &[&str]) -> Ran {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run(
            std::iter::once("ssf").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        Ran {
            code,
            stdout: String::from_utf8(out).unwrap(),
            stderr: String::from_utf8(err).unwrap(),
        }
    }

    #[test]
    fn numbers_accept_fractions() {
        assert_eq!(parse_number("1/64").unwrap(), 0.015625);
        assert_eq!(parse_number("0.25").unwrap(), 0.25);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("x").is_err());
        assert!(parse_number("inf").is_err());
    }

    #[test]
    fn check_reports_ssf_and_witness() {
        let o = ssf(&["check", "--spec", "hardsquare"]);
        assert_eq!(o.code, 0);
        assert_eq!(o.stdout.clone(), "ssf: true\nsafe_symbols: [0]\n");

        let o = ssf(&["check", "--spec", "checkerboard:4"]);
        assert_eq!(o.code, 1);
        assert!(o
            .stdout
            .clone()
            .contains("witness: north=0 south=1 east=2 west=3"));
    }

    #[test]
    fn spec_files_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("hs.txt");
        fs::write(
            &good,
            "# hard square\nalphabet 2\nhforbid 1 1\nvforbid 1 1\n",
        )
        .unwrap();
        let o = ssf(&["check", "--spec", good.to_str().unwrap()]);
        assert_eq!(o.stdout.clone(), "ssf: true\nsafe_symbols: [0]\n");

        let bad = dir.path().join("bad.txt");
        fs::write(&bad, "alphabet 2\nhforbid 1 5\n").unwrap();
        let o = ssf(&["check", "--spec", bad.to_str().unwrap()]);
        assert_eq!(o.code, 2);
        assert!(o.stderr.contains("line 2"));

        assert_eq!(ssf(&["check", "--spec", "/no/such/file"]).code, 2);
        assert_eq!(ssf(&["check", "--spec", "hardsquare", "--bogus"]).code, 2);
        assert_eq!(
            ssf(&[
                "verify",
                "--spec",
                "hardsquare",
                "--size",
                "4",
                "--epsilon",
                "1/0"
            ])
            .code,
            2
        );
    }

    #[test]
    fn sample_check_repair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let w = dir.path().join("w.txt");
        let r = dir.path().join("r.txt");
        let (w_s, r_s) = (w.to_str().unwrap(), r.to_str().unwrap());

        let o = ssf(&[
            "sample",
            "--spec",
            "hardsquare",
            "--size",
            "9",
            "--seed",
            "5",
            "--out",
            w_s,
        ]);
        assert_eq!(o.code, 0);
        assert_eq!(
            ssf(&["check", "--spec", "hardsquare", "--window", w_s]).code,
            0
        );

        let o = ssf(&[
            "sample",
            "--spec",
            "hardsquare",
            "--size",
            "9",
            "--seed",
            "5",
            "--corrupt",
            "0.5",
            "--out",
            w_s,
        ]);
        assert_eq!(o.code, 0);
        let o = ssf(&["check", "--spec", "hardsquare", "--window", w_s]);
        assert_eq!(o.code, 1);
        assert!(o.stdout.clone().contains("violations: "));

        let o = ssf(&[
            "repair",
            "--spec",
            "hardsquare",
            "--window",
            w_s,
            "--size",
            "8",
            "--out",
            r_s,
        ]);
        assert_eq!(o.code, 0);
        // only the box of radius 8 is repaired; its outer ring may still clash
        let text = fs::read_to_string(&r).unwrap();
        assert!(text.starts_with("window -9 -9 19 19\n"));

        // the same window cut down to the repaired box is admissible
        let rows: Vec<&str> = text.lines().skip(2).take(17).collect();
        let inner: Vec<String> = rows
            .iter()
            .map(|l| {
                l.split_whitespace()
                    .skip(1)
                    .take(17)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let cut = dir.path().join("cut.txt");
        fs::write(&cut, format!("window -8 -8 17 17\n{}\n", inner.join("\n"))).unwrap();
        assert_eq!(
            ssf(&[
                "check",
                "--spec",
                "hardsquare",
                "--window",
                cut.to_str().unwrap()
            ])
            .code,
            0
        );
    }

    #[test]
    fn verify_writes_matching_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("out.csv");
        let o = ssf(&[
            "verify",
            "--spec",
            "checkerboard:5",
            "--size",
            "6",
            "--trials",
            "5",
            "--corrupt",
            "0",
            "--epsilon",
            "1/64",
            "--csv",
            csv.to_str().unwrap(),
        ]);
        assert_eq!(o.code, 0);
        let out = o.stdout.clone();
        assert_eq!(out, fs::read_to_string(&csv).unwrap());
        let mut lines = out.lines();
        assert_eq!(
            lines.next().unwrap(),
            "trial,seed,N,q,bad_total,bad_fraction,certified_gap,min_shell_margin,total_gap,total_bound,case1_status,all_pass"
        );
        assert_eq!(
            out.lines()
                .filter(|l| l.ends_with(",admissible,true"))
                .count(),
            5
        );
        assert!(out
            .lines()
            .last()
            .unwrap()
            .starts_with("# summary: trials=5 passed=5"));
    }

    #[test]
    fn verify_refuses_out_of_hypothesis_caps() {
        let args = [
            "verify",
            "--spec",
            "hardsquare",
            "--size",
            "4",
            "--cap",
            "0.01",
        ];
        assert_eq!(ssf(&args).code, 2);
        let mut with = args.to_vec();
        with.push("--allow-out-of-hypothesis");
        assert_ne!(ssf(&with).code, 2);
    }

    #[test]
    fn entropy_lines() {
        let o = ssf(&["entropy", "--spec", "full:2", "--strip-width", "4"]);
        assert_eq!(
            o.stdout.clone(),
            "entropy_per_site 0.693147180560 strip_width 4 states 16\n"
        );
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("e.txt");
        fs::write(&empty, "alphabet 1\nhforbid 0 0\n").unwrap();
        let o = ssf(&[
            "entropy",
            "--spec",
            empty.to_str().unwrap(),
            "--strip-width",
            "3",
        ]);
        assert!(o.stdout.clone().starts_with("empty subshift"));
    }
}
