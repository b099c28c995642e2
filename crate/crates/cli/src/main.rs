//! `dynlu` — kinematic-tree dynamics solvers over block-sparse LU.
//!
//! Subcommands: `solve` (one inverse/forward/generic solve from a model and
//! state file), `check` (well-posedness of a sensor distribution), `bench`
//! (serial-chain flop-count sweeps as CSV), `export-matrix` (Matrix Market
//! dump of the assembled system).
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 ill-posed or singular
//! problem.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use dynlu::assembly::{
    assemble_ne, export_system, extend_fd, extend_generic, extend_id, loadcell_h, MeasureKind,
};
use dynlu::classic::DynVars;
use dynlu::estimate::{
    check_wellposed, execute, feet_singularity_certificate, parse_measurement_spec, plan,
    EstimateError, Problem,
};
use dynlu::model::{kinematics, parse_model, KinematicTree};
use dynlu::sparse::SparseError;

use dynlu_cli::bench::{run_bench, write_csv, ALL_METHODS};
use dynlu_cli::state::{parse_state, StateFile};

#[derive(Parser)]
#[command(name = "dynlu", about = "Rigid-body dynamics via permuted sparse LU")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Id,
    Fd,
    Generic,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one dynamics problem for a given state.
    Solve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        problem: ProblemArg,
        /// Measurement spec (required for --problem generic).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        state: PathBuf,
    },
    /// Report whether a problem/sensor distribution is well-posed.
    Check {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "generic")]
        problem: ProblemArg,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Flop-count sweep over serial chains, written as CSV.
    Bench {
        /// Chain family (only serial-chain).
        #[arg(long, default_value = "serial-chain")]
        family: String,
        /// Comma-separated methods; defaults to all.
        #[arg(long, value_delimiter = ',')]
        problems: Vec<String>,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write the assembled system: `<out>.D.mtx` and `<out>.b.txt`.
    ExportMatrix {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum)]
        problem: ProblemArg,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure modes mapped to exit codes.
enum Failure {
    /// I/O, parse, or usage errors: exit 1.
    Input(anyhow::Error),
    /// Ill-posed or singular problems: exit 2.
    IllPosed(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

fn classify(e: EstimateError) -> Failure {
    match &e {
        EstimateError::NotWellPosed(_)
        | EstimateError::Sparse(SparseError::StructurallySingular(..))
        | EstimateError::Sparse(SparseError::NumericallySingularPivot { .. })
        | EstimateError::Dynamics(_) => Failure::IllPosed(anyhow!(e.to_string())),
        _ => Failure::Input(anyhow!(e.to_string())),
    }
}

fn read(path: &PathBuf) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn load_problem(
    tree: &KinematicTree,
    problem: ProblemArg,
    spec: &Option<PathBuf>,
) -> Result<Problem, Failure> {
    match problem {
        ProblemArg::Id => Ok(Problem::Id),
        ProblemArg::Fd => Ok(Problem::Fd),
        ProblemArg::Generic => {
            let path = spec
                .as_ref()
                .ok_or_else(|| anyhow!("--problem generic requires --spec"))?;
            let text = read(path)?;
            let spec = parse_measurement_spec(&text, tree).map_err(|e| match e {
                EstimateError::SpecParse { .. } | EstimateError::Model(_) => {
                    Failure::Input(anyhow!(e.to_string()))
                }
                other => classify(other),
            })?;
            Ok(Problem::Generic(spec))
        }
    }
}

fn print_outputs(tree: &KinematicTree, vars: &DynVars) {
    let six = |v: &dynlu::spatial::SpatialVec| {
        v.to_vec6()
            .iter()
            .map(|x| format!("{x:.12e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for i in 1..=tree.n_links() {
        let name = tree.link_name(i);
        println!("{name} tau={:.12e}", vars.tau[i - 1]);
        println!("{name} qdd={:.12e}", vars.qdd[i - 1]);
        println!("{name} f={}", six(&vars.f[i - 1]));
        println!("{name} a={}", six(&vars.a[i - 1]));
        println!("{name} fx={}", six(&vars.fx[i - 1]));
    }
}

fn cmd_solve(
    model: &PathBuf,
    problem: ProblemArg,
    spec: &Option<PathBuf>,
    state: &PathBuf,
) -> Result<(), Failure> {
    let tree = parse_model(&read(model)?).map_err(|e| Failure::Input(anyhow!(e.to_string())))?;
    let problem = load_problem(&tree, problem, spec)?;
    let StateFile { q, qd, inputs } = parse_state(&read(state)?, &tree)?;
    let solver = plan(&tree, problem).map_err(classify)?;
    let out = execute(&solver, &q, &qd, &inputs).map_err(classify)?;
    print_outputs(&tree, &out.vars);
    eprintln!(
        "solved: {} flops ({}), fill {}{}",
        out.flops.total(),
        out.flops,
        solver.predicted_fill(),
        if out.refactored_on_instance {
            ", refactored on instance pattern"
        } else {
            ""
        }
    );
    Ok(())
}

fn cmd_check(
    model: &PathBuf,
    problem: ProblemArg,
    spec: &Option<PathBuf>,
) -> Result<(), Failure> {
    let tree = parse_model(&read(model)?).map_err(|e| Failure::Input(anyhow!(e.to_string())))?;
    let problem = load_problem(&tree, problem, spec)?;
    if let Problem::Generic(spec) = &problem {
        // the relative-pose certificate for load-cell feet
        if spec
            .entries
            .iter()
            .any(|e| e.kind == MeasureKind::LoadCell3)
        {
            let cert = feet_singularity_certificate(&loadcell_h());
            println!(
                "load-cell certificate: min singular value {:.3e} (R = identity, p = ({}, {}, {})){}",
                cert.min_singular_value,
                cert.moment_arm.x,
                cert.moment_arm.y,
                cert.moment_arm.z,
                if cert.witness_found {
                    " -- singular relative pose constructed"
                } else {
                    ""
                }
            );
        }
    }
    let verdict = check_wellposed(&tree, &problem);
    println!("{verdict}");
    if verdict.is_well_posed() {
        Ok(())
    } else {
        Err(Failure::IllPosed(anyhow!("problem is not well-posed")))
    }
}

fn cmd_bench(
    family: &str,
    problems: &[String],
    n_max: usize,
    csv: &Option<PathBuf>,
) -> Result<(), Failure> {
    if family != "serial-chain" {
        return Err(Failure::Input(anyhow!("unknown family `{family}`")));
    }
    if n_max < 1 {
        return Err(Failure::Input(anyhow!("--n-max must be at least 1")));
    }
    let methods: Vec<String> = if problems.is_empty() {
        ALL_METHODS.iter().map(|s| s.to_string()).collect()
    } else {
        problems.to_vec()
    };
    let records = run_bench(&methods, n_max)?;
    match csv {
        Some(path) => {
            let mut file = fs::File::create(path)
                .with_context(|| format!("creating {}", path.display()))
                .map_err(Failure::Input)?;
            write_csv(&records, &mut file)?;
        }
        None => {
            let mut out = std::io::stdout();
            write_csv(&records, &mut out)?;
        }
    }
    Ok(())
}

fn cmd_export(
    model: &PathBuf,
    problem: ProblemArg,
    spec: &Option<PathBuf>,
    state: &PathBuf,
    out: &std::path::Path,
) -> Result<(), Failure> {
    let tree = parse_model(&read(model)?).map_err(|e| Failure::Input(anyhow!(e.to_string())))?;
    let problem = load_problem(&tree, problem, spec)?;
    let StateFile { q, qd, inputs } = parse_state(&read(state)?, &tree)?;

    let kin = kinematics(&tree, &q, &qd).map_err(|e| Failure::Input(anyhow!(e.to_string())))?;
    let base = assemble_ne(&tree, &kin);
    let sys = match &problem {
        Problem::Id => extend_id(&base, &inputs.qdd, &inputs.fx),
        Problem::Fd => extend_fd(&base, &inputs.tau, &inputs.fx),
        Problem::Generic(spec) => {
            let values = dynlu::estimate::measurement_values(spec, &inputs)
                .map_err(classify)?;
            extend_generic(&base, spec, &values)
        }
    }
    .map_err(|e| Failure::Input(anyhow!(e.to_string())))?;

    let (p, q_perm) = sys.natural_perms();
    let d_path = out.with_extension("D.mtx");
    let b_path = out.with_extension("b.txt");
    let mut d_file = fs::File::create(&d_path)
        .with_context(|| format!("creating {}", d_path.display()))
        .map_err(Failure::Input)?;
    let mut b_file = fs::File::create(&b_path)
        .with_context(|| format!("creating {}", b_path.display()))
        .map_err(Failure::Input)?;
    export_system(&sys, &p, &q_perm, &mut d_file, &mut b_file)
        .map_err(|e| Failure::Input(anyhow!(e.to_string())))?;
    let (rows, cols) = sys.scalar_shape();
    println!(
        "wrote {} and {} ({rows} x {cols})",
        d_path.display(),
        b_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { model, problem, spec, state } => cmd_solve(model, *problem, spec, state),
        Command::Check { model, problem, spec } => cmd_check(model, *problem, spec),
        Command::Bench { family, problems, n_max, csv } => cmd_bench(family, problems, *n_max, csv),
        Command::ExportMatrix { model, problem, spec, state, out } => {
            cmd_export(model, *problem, spec, state, out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::IllPosed(e)) => {
            eprintln!("not well-posed: {e:#}");
            ExitCode::from(2)
        }
    }
}
