//! Batch front end. Exit codes: 0 success, 1 usage, 2 data, 3 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtinpaint::io::{load_container, load_mask, load_stack, save_mask, save_stack, Container, RunConfig};
use mtinpaint::metrics::quality_report;
use mtinpaint::pipeline::anchor_for;
use mtinpaint::{
    detect_clouds, group_patches, halrtc, inpaint, mode_ranks, rearrange_forward, search_similar,
    simulate_degradation, Error, ImageStack, ObservationMask, Tensor,
};

#[derive(Parser)]
#[command(name = "mtinpaint", version, about = "Missing-area reconstruction for multitemporal image stacks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fill missing entries by non-local low-rank tensor completion.
    Inpaint(Completion),
    /// Fill missing entries with the whole-stack nuclear-norm baseline.
    Halrtc(Completion),
    /// Flag cloudy pixels of one acquisition.
    DetectCloud {
        #[arg(long)]
        input: PathBuf,
        /// Cloudy acquisition, 1-based.
        #[arg(long)]
        time: usize,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Build a mask from a degradation spec file.
    SimulateMask {
        /// Stack whose dimensions the mask takes.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Quality of a reconstruction against a reference.
    Metrics {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Restrict PSNR and SSIM to the pixels missing in this mask.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Acquisition, 1-based; default is every acquisition (with a mask,
        /// every acquisition that has missing pixels).
        #[arg(long)]
        time: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fiber counts and span dimensions of a patch group.
    AnalyzeRanks {
        /// A stack to search, or with no anchor a container holding the group itself.
        #[arg(long)]
        group_from: PathBuf,
        /// `row,col,time`, 1-based pixel of the target patch.
        #[arg(long)]
        anchor: Option<String>,
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Completion {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Usage(m),
            other => Failure::Lib(other),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure::Lib(Error::Io { path: path.into(), source: e }))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::Lib(Error::Io { path: path.into(), source: e }))
}

/// Loads the config for data of `range` and echoes every resolved key.
fn effective_config(path: Option<&Path>, range: f64) -> CliResult<RunConfig> {
    let text = match path {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let cfg = RunConfig::parse(&text, range)?;
    println!("# effective configuration");
    print!("{}", cfg.to_kv_string());
    Ok(cfg)
}

fn one_based(name: &str, v: usize) -> CliResult<usize> {
    v.checked_sub(1)
        .ok_or_else(|| Failure::Usage(format!("{name} is 1-based, got 0")))
}

fn emit(report: Option<&Path>, text: &str) -> CliResult<()> {
    println!("# report");
    print!("{text}");
    match report {
        Some(p) => write_text(p, text),
        None => Ok(()),
    }
}

fn complete(args: &Completion, baseline: bool) -> CliResult<()> {
    let stack = load_stack(&args.input)?;
    let mask = load_mask(&args.mask)?;
    let cfg = effective_config(args.config.as_deref(), stack.value_range())?;
    let (out, text) = if baseline {
        let (out, trace) = halrtc(&stack, &mask, &cfg.pipeline.halrtc)?;
        let text = format!(
            "iterations = {}\nconverged = {}\nmissing_before = {}\n",
            trace.iterations,
            trace.converged,
            mask.missing_count()
        );
        (out, text)
    } else {
        let (out, report) = inpaint(&stack, &mask, &cfg.pipeline)?;
        (out, report.to_kv_string())
    };
    save_stack(&args.output, &out)?;
    emit(args.report.as_deref(), &text)
}

fn parse_anchor(s: &str) -> CliResult<[usize; 3]> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("anchor {s:?} is not row,col,time")))?;
    match parts[..] {
        [r, c, t] => Ok([one_based("row", r)?, one_based("col", c)?, one_based("time", t)?]),
        _ => Err(Failure::Usage(format!("anchor {s:?} is not row,col,time"))),
    }
}

fn analyze(
    group_from: &Path,
    anchor: Option<&str>,
    mask: Option<&Path>,
    report: Option<&Path>,
    config: Option<&Path>,
) -> CliResult<()> {
    let stack = load_stack(group_from)?;
    let cfg = effective_config(config, stack.value_range())?;
    let group: Tensor = match anchor {
        None => stack.into_values(),
        Some(a) => {
            let [row, col, time] = parse_anchor(a)?;
            let d = stack.dims();
            if row >= d.height || col >= d.width || time >= d.times {
                return Err(Failure::Lib(Error::OutOfBounds(format!("anchor {a} outside {d}"))));
            }
            let mask = match mask {
                Some(p) => load_mask(p)?,
                None => ObservationMask::all_observed(d),
            };
            cfg.pipeline.validate(d)?;
            let w = rearrange_forward(&stack, &mask)?;
            let target = anchor_for(&w, cfg.pipeline.search.patch_width, row, col * d.times + time);
            let refs = search_similar(&w, target, &cfg.pipeline.search)?;
            group_patches(&w, &refs)?.values
        }
    };
    let shape: Vec<String> = group.shape().iter().map(usize::to_string).collect();
    let mut text = format!("shape = {}\nrank_tol = {}\n", shape.join(","), cfg.rank_tol);
    for r in mode_ranks(&group, cfg.rank_tol)? {
        text += &format!(
            "mode{m}.size = {}\nmode{m}.fibers = {}\nmode{m}.dim_span = {}\n",
            r.size,
            r.fibers,
            r.dim_span,
            m = r.mode
        );
    }
    emit(report, &text)
}

fn metrics(
    test: &Path,
    reference: &Path,
    mask: Option<&Path>,
    time: Option<usize>,
    report: Option<&Path>,
) -> CliResult<()> {
    let x = load_stack(test)?;
    let r = load_stack(reference)?;
    effective_config(None, r.value_range())?;
    let mask = mask.map(load_mask).transpose()?;
    let d = r.dims();
    let times: Vec<usize> = match time {
        Some(t) => vec![one_based("time", t)?],
        None => (0..d.times)
            .filter(|&l| match &mask {
                Some(m) => (0..d.height).any(|i| (0..d.width).any(|j| !m.is_observed(i, j, 0, l))),
                None => true,
            })
            .collect(),
    };
    if times.is_empty() {
        return Err(Failure::Lib(Error::Shape("the mask has no missing pixel".into())));
    }
    let mut text = String::new();
    for (n, &l) in times.iter().enumerate() {
        if n > 0 {
            text.push('\n');
        }
        text += &quality_report(&x, &r, l, mask.as_ref())?.to_kv_string();
    }
    emit(report, &text)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Inpaint(a) => complete(&a, false),
        Command::Halrtc(a) => complete(&a, true),
        Command::DetectCloud {
            input,
            time,
            output,
            config,
        } => {
            let stack: ImageStack = load_stack(&input)?;
            let cfg = effective_config(config.as_deref(), stack.value_range())?;
            let mask = detect_clouds(&stack, one_based("time", time)?, &cfg.detect)?;
            save_mask(&output, &mask)?;
            emit(None, &format!("missing = {}\n", mask.missing_count()))
        }
        Command::SimulateMask {
            input,
            spec,
            output,
            config,
        } => {
            let dims = match load_container(&input)? {
                Container::Stack(s) => s.dims(),
                Container::Mask(m) => m.dims(),
            };
            let cfg = effective_config(config.as_deref(), 255.0)?;
            let spec = mtinpaint::io::parse_degradation_spec(&read_text(&spec)?, cfg.seed)?;
            let mask = simulate_degradation(dims, &spec)?;
            save_mask(&output, &mask)?;
            emit(None, &format!("missing = {}\n", mask.missing_count()))
        }
        Command::Metrics {
            test,
            reference,
            mask,
            time,
            report,
        } => metrics(&test, &reference, mask.as_deref(), time, report.as_deref()),
        Command::AnalyzeRanks {
            group_from,
            anchor,
            mask,
            report,
            config,
        } => analyze(&group_from, anchor.as_deref(), mask.as_deref(), report.as_deref(), config.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
