//! Command-line harness for the quantization experiments.
//!
//! Subcommands: `energy`, `bound`, `pareto`, `stamp-layer`, `generate`,
//! `ingest`, `selfcheck`. Configuration comes from INI-style config files
//! (`--config`) overridden by flags; see [`config`] for the grammar.

pub mod commands;
pub mod config;
pub mod selfcheck;

use crate::error::Result;
use config::parse_args;

const USAGE: &str = "\
stamp - sequence-transform mixed-precision quantization experiments

USAGE:
    stamp <SUBCOMMAND> [FLAGS]

SUBCOMMANDS:
    energy       token-energy distribution per transform (CSV)
    bound        per-token error bound vs measured error (CSV)
    pareto       SQNR sweep over the number of high-precision tokens (CSV)
    stamp-layer  quantized linear-layer SQNR for the transform 2x2 (CSV)
    generate     synthesize activations into a tensor file
    ingest       validate and summarize a tensor file
    selfcheck    run the embedded property suite, exit nonzero on failure

FLAGS (shared; also valid as `key = value` lines in --config files):
    --config <path>            INI-style config file
    --seed <u64>               PRNG seed (default 0)
    --out <path>               output CSV / tensor path
    --samples <n>              batch size (default 256)
    --seq-len <s>              sequence length (default 256)
    --feat-dim <d>             feature size (default 64)
    --data <spec>              ar1:RHO | grid:RHOH,RHOW | outliers:BASE,OUT,COUNT
                               (default ar1:0.95)
    --input <path>             read activations from a tensor file instead
    --transform <t>            identity | klt | dct | wht | dwt (default dwt)
    --levels <k>               wavelet level count (default: 3 for 2D grids,
                               log2(s) capped at 6 for 1D)
    --grid <HxW>               token-grid annotation for 2D data
    --feature-transform <t>    identity | hadamard (default identity);
                               composed into the bound/pareto pipelines
                               (stamp-layer enumerates both variants itself)
    --alloc <a>                none | uniform:B | optimal:AVG | rounded:AVG |
                               two-level:N,HP,LP (default two-level:64,8,4)
    --granularity <g>          per-token | per-block:N (default per-token)
    --nhp-list <n,n,...>       pareto sweep points (default 0,1,2,4,8,16,32,64)
    --uniform-bits <b>         baseline width for `bound` (default: rounded
                               average of the stamp allocation)
    --weights <path>           weight matrix tensor file for `stamp-layer`
";

fn dispatch(cmd: &str, rest: &[String]) -> Result<()> {
    let resolved = parse_args(rest)?.resolve()?;
    match cmd {
        "energy" => commands::cmd_energy(&resolved),
        "bound" => commands::cmd_bound(&resolved),
        "pareto" => commands::cmd_pareto(&resolved),
        "stamp-layer" => commands::cmd_stamp_layer(&resolved),
        "generate" => commands::cmd_generate(&resolved),
        "ingest" => commands::cmd_ingest(&resolved),
        _ => unreachable!(),
    }
}

/// Entry point for the `stamp` binary; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    let Some(cmd) = args.first().map(String::as_str) else {
        eprint!("{USAGE}");
        return 2;
    };
    match cmd {
        "help" | "--help" | "-h" => {
            print!("{USAGE}");
            0
        }
        "selfcheck" => selfcheck::cmd_selfcheck(),
        "energy" | "bound" | "pareto" | "stamp-layer" | "generate" | "ingest" => {
            match dispatch(cmd, &args[1..]) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("error: {e}");
                    1
                }
            }
        }
        other => {
            eprintln!("error: unknown subcommand '{other}'\n");
            eprint!("{USAGE}");
            2
        }
    }
}
