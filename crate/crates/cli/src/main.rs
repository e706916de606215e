use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use speed_sim::asm::{assemble, disassemble};
use speed_sim::dataflow::{parse_layers, Strategy};
use speed_sim::isa::Precision;
use speed_sim::report::{
    compare, layers_csv, run_layers, run_model, sweep, sweep_csv, to_json, ReportError, RunOptions, SweepGrid,
};
use speed_sim::vcore::MachineConfig;

#[derive(Parser)]
#[command(name = "speed", version, about = "Multi-precision vector processor simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Out {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Ff,
    Cf,
    Mixed,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Ff => Strategy::Ff,
            StrategyArg::Cf => Strategy::Cf,
            StrategyArg::Mixed => Strategy::Mixed,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Machine configuration file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Operand precision in bits.
    #[arg(long, default_value_t = 16, value_parser = parse_precision_bits)]
    precision: u32,
    #[arg(long, value_enum, default_value_t = StrategyArg::Mixed)]
    strategy: StrategyArg,
    /// Seed for generated inputs and weights.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Out::Json)]
    out: Out,
    /// Check every layer against the reference convolution.
    #[arg(long)]
    verify: bool,
    /// Report planner estimates without executing the programs.
    #[arg(long)]
    estimate: bool,
}

fn parse_precision_bits(s: &str) -> Result<u32, String> {
    let b: u32 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    Precision::from_bits(b)
        .map(|_| b)
        .ok_or_else(|| "precision must be 4, 8 or 16".into())
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad list item {v:?}")))
        .collect()
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the layers of a layer table.
    RunLayer {
        file: PathBuf,
        /// Only the layer with this name.
        #[arg(long)]
        name: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run every conv layer of a benchmark network.
    RunModel {
        model: String,
        #[command(flatten)]
        common: Common,
    },
    /// FF-only, CF-only and mixed totals for a network.
    CompareStrategies {
        model: String,
        #[command(flatten)]
        common: Common,
    },
    /// Aggregate metrics over a grid of machine shapes (CSV).
    Sweep {
        model: String,
        #[arg(long, default_value = "4")]
        lanes: String,
        #[arg(long, default_value = "4")]
        tile_r: String,
        #[arg(long, default_value = "4")]
        tile_c: String,
        #[arg(long, default_value = "4,8,16")]
        precisions: String,
        #[command(flatten)]
        common: Common,
    },
    /// Simulate and check a network or layer table against the reference.
    Verify {
        /// Model name or layer-table path.
        target: String,
        #[command(flatten)]
        common: Common,
    },
    /// Print assembly for encoded instruction words.
    Disasm {
        file: PathBuf,
        /// Input is raw little-endian words instead of hex text.
        #[arg(long)]
        binary: bool,
    },
    /// Encode assembly text; prints one hex word per line.
    Asm {
        file: PathBuf,
        /// Write raw little-endian words to this file instead.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

struct Fail {
    code: u8,
    msg: String,
}

impl From<ReportError> for Fail {
    fn from(e: ReportError) -> Self {
        Fail {
            code: e.exit_code() as u8,
            msg: e.to_string(),
        }
    }
}

fn fail(msg: impl ToString) -> Fail {
    Fail {
        code: 2,
        msg: msg.to_string(),
    }
}

fn load_config(c: &Common) -> Result<MachineConfig, Fail> {
    match &c.config {
        Some(p) => MachineConfig::load(p).map_err(|e| fail(format!("{}: {e}", p.display()))),
        None => Ok(MachineConfig::default()),
    }
}

fn options(c: &Common) -> RunOptions {
    RunOptions {
        simulate: !c.estimate,
        verify: c.verify,
        seed: c.seed,
    }
}

fn precision(c: &Common) -> Precision {
    Precision::from_bits(c.precision).expect("validated by the parser")
}

fn read_text(p: &Path) -> Result<String, Fail> {
    std::fs::read_to_string(p).map_err(|e| fail(format!("{}: {e}", p.display())))
}

fn emit(report: &speed_sim::report::CycleReport, out: Out) {
    match out {
        Out::Json => print!("{}", to_json(report)),
        Out::Csv => print!("{}", layers_csv(report)),
    }
}

fn run_table(file: &Path, name: Option<&str>, c: &Common) -> Result<speed_sim::report::CycleReport, Fail> {
    let cfg = load_config(c)?;
    let p = precision(c);
    let mut layers = parse_layers(&read_text(file)?, p).map_err(|e| fail(format!("{}: {e}", file.display())))?;
    if let Some(n) = name {
        layers.retain(|l| l.name == n);
        if layers.is_empty() {
            return Err(fail(format!("no layer named {n:?}")));
        }
    }
    let label = file.file_stem().and_then(|s| s.to_str()).unwrap_or("layers");
    Ok(run_layers(label, &layers, &cfg, p, c.strategy.into(), options(c))?)
}

fn main_inner(cli: Cli) -> Result<(), Fail> {
    match cli.cmd {
        Cmd::RunLayer { file, name, common } => {
            let r = run_table(&file, name.as_deref(), &common)?;
            emit(&r, common.out);
        }
        Cmd::RunModel { model, common } => {
            let cfg = load_config(&common)?;
            let r = run_model(
                &model,
                &cfg,
                common.strategy.into(),
                precision(&common),
                options(&common),
            )?;
            emit(&r, common.out);
        }
        Cmd::CompareStrategies { model, common } => {
            let cfg = load_config(&common)?;
            let r = run_model(&model, &cfg, Strategy::Mixed, precision(&common), options(&common))?;
            let cmp = compare(&r);
            match common.out {
                Out::Json => print!("{}", to_json(&cmp)),
                Out::Csv => {
                    let opt = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
                    let ratio = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
                    println!("strategy,total_cycles,ratio_over_mixed,reference_ratio");
                    println!(
                        "ff,{},{},{:.2}",
                        opt(cmp.ff_total),
                        ratio(cmp.ff_over_mixed),
                        cmp.reference_ff_over_mixed
                    );
                    println!(
                        "cf,{},{},{:.2}",
                        opt(cmp.cf_total),
                        ratio(cmp.cf_over_mixed),
                        cmp.reference_cf_over_mixed
                    );
                    println!("mixed,{},1.000000,", cmp.mixed_total);
                }
            }
        }
        Cmd::Sweep {
            model,
            lanes,
            tile_r,
            tile_c,
            precisions,
            common,
        } => {
            let cfg = load_config(&common)?;
            let list = |s: &str| parse_list(s).map_err(fail);
            let precision = list(&precisions)?
                .into_iter()
                .map(|b| Precision::from_bits(b as u32).ok_or_else(|| fail(format!("bad precision {b}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let grid = SweepGrid {
                lanes: list(&lanes)?,
                tile_r: list(&tile_r)?,
                tile_c: list(&tile_c)?,
                precision,
            };
            let rows = sweep(&grid, &model, &cfg, common.strategy.into(), options(&common))?;
            match common.out {
                Out::Json => print!("{}", to_json(&rows)),
                Out::Csv => print!("{}", sweep_csv(&rows)),
            }
        }
        Cmd::Verify { target, mut common } => {
            common.verify = true;
            let path = Path::new(&target);
            let r = if path.exists() {
                run_table(path, None, &common)?
            } else {
                let cfg = load_config(&common)?;
                run_model(
                    &target,
                    &cfg,
                    common.strategy.into(),
                    precision(&common),
                    options(&common),
                )?
            };
            println!("verified {} layers of {}: all outputs match", r.layers.len(), r.model);
        }
        Cmd::Disasm { file, binary } => {
            let words: Vec<u32> = if binary {
                let b = std::fs::read(&file).map_err(|e| fail(format!("{}: {e}", file.display())))?;
                if b.len() % 4 != 0 {
                    return Err(fail("binary length is not a multiple of 4"));
                }
                b.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            } else {
                read_text(&file)?
                    .split_whitespace()
                    .map(|t| {
                        let h = t.trim_start_matches("0x").trim_start_matches("0X");
                        u32::from_str_radix(h, 16).map_err(|_| fail(format!("bad hex word {t:?}")))
                    })
                    .collect::<Result<_, _>>()?
            };
            print!("{}", disassemble(&words).map_err(fail)?);
        }
        Cmd::Asm { file, output } => {
            let words = assemble(&read_text(&file)?).map_err(fail)?;
            match output {
                Some(p) => {
                    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_le_bytes()).collect();
                    std::fs::write(&p, bytes).map_err(|e| fail(format!("{}: {e}", p.display())))?;
                }
                None => {
                    for w in words {
                        println!("0x{w:08x}");
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
