use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use quadorient::parallel::run_partitioned;
use quadorient::verify::VerifyError;
use quadorient::{
    check_consistent, loglog_slope, orient_serial, orient_unionfind, partition_cells, read_msh, read_native,
    read_orientation, ribbons, scaling_sweep, write_native, write_orientation, write_rounds_csv, GridDims, MeshFamily,
    MeshKind, MoebiusError, ParallelError, PartitionMethod, QuadMesh, Schedule, SweepError,
};

const EXIT_MOEBIUS: u8 = 2;

/// Consistent edge orientations for quadrilateral meshes.
///
/// Exit status: 0 on success, 2 when a Moebius strip makes the mesh
/// unorientable, 1 on any other error (including usage errors).
#[derive(Parser, Debug)]
#[command(name = "quadorient", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a mesh in the native format.
    Gen(GenArgs),
    /// Compute a consistent edge orientation.
    Orient(OrientArgs),
    /// Check an orientation file against a mesh.
    Verify(VerifyArgs),
    /// List the ribbons (classes of edges that determine each other).
    Ribbons(RibbonsArgs),
    /// Communication rounds of the simulated parallel algorithm for a list of process counts.
    Scale(ScaleArgs),
    /// Run the simulated parallel algorithm and report its negotiation trace.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Kind {
    Square,
    Torus,
    Moebius,
    CubedSphere,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    /// Cells along x (square, torus, moebius).
    #[arg(long)]
    nx: Option<usize>,
    /// Cells along y; defaults to nx for square and torus, 1 for moebius.
    #[arg(long)]
    ny: Option<usize>,
    /// Cells per cube edge (cubed-sphere).
    #[arg(long)]
    n: Option<usize>,
    /// Relabel vertices and cells with this seed.
    #[arg(long)]
    shuffle: Option<u64>,
}

impl FamilyArgs {
    fn family(&self, kind: Kind) -> Result<MeshFamily> {
        let grid = |default_ny: Option<usize>| -> Result<(usize, usize)> {
            let nx = self.nx.with_context(|| format!("{kind:?} needs --nx"))?;
            Ok((nx, self.ny.or(default_ny).unwrap_or(nx)))
        };
        let kind = match kind {
            Kind::Square => {
                let (nx, ny) = grid(None)?;
                MeshKind::Square { nx, ny }
            }
            Kind::Torus => {
                let (nx, ny) = grid(None)?;
                MeshKind::Torus { nx, ny }
            }
            Kind::Moebius => {
                let (nx, ny) = grid(Some(1))?;
                MeshKind::Moebius { nx, ny }
            }
            Kind::CubedSphere => MeshKind::CubedSphere { n: self.n.context("cubed-sphere needs --n")? },
        };
        Ok(MeshFamily { kind, shuffle: self.shuffle })
    }
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[command(flatten)]
    params: FamilyArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    /// `quadmesh <nv> <nc>` header followed by one cell per line.
    Native,
    /// Gmsh MSH 2.2 ASCII; only 4-node quadrangles are read.
    Msh,
}

#[derive(Args, Debug)]
struct MeshInput {
    /// Mesh file (`.mesh` native, `.msh` Gmsh).
    mesh: PathBuf,
    /// Override the format implied by the file extension.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Declare the cells a row-major NXxNY grid (cell j*NX+i is (i, j)), as
    /// written by `gen` without --shuffle; needed for --partitioner block.
    #[arg(long, value_parser = parse_grid)]
    grid: Option<GridDims>,
}

fn parse_grid(s: &str) -> Result<GridDims, String> {
    let (x, y) = s.split_once(['x', 'X']).ok_or("expected NXxNY, e.g. 32x32")?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a cell count"));
    Ok(GridDims { nx: parse(x)?, ny: parse(y)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    Serial,
    Unionfind,
    Parallel,
}

#[derive(Args, Debug)]
struct ParallelArgs {
    /// Number of simulated processes.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    np: u64,
    /// Cell partitioner: block (structured grids) or bfs (any mesh).
    #[arg(long, default_value_t = PartitionMethod::Bfs)]
    partitioner: PartitionMethod,
}

#[derive(Args, Debug)]
struct OrientArgs {
    #[command(flatten)]
    input: MeshInput,
    #[arg(long, value_enum, default_value_t = Algo::Serial)]
    algo: Algo,
    /// Used with --algo parallel.
    #[command(flatten)]
    parallel: ParallelArgs,
    /// Orientation file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    input: MeshInput,
    /// Orientation file (`<lo> <hi> <+|->` per edge).
    orientation: PathBuf,
}

#[derive(Args, Debug)]
struct RibbonsArgs {
    #[command(flatten)]
    input: MeshInput,
}

#[derive(Args, Debug)]
struct ScaleArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[command(flatten)]
    params: FamilyArgs,
    /// Comma-separated, strictly increasing process counts.
    #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u64).range(1..))]
    np: Vec<u64>,
    /// Defaults to block for unshuffled grids, bfs otherwise.
    #[arg(long)]
    partitioner: Option<PartitionMethod>,
    /// `P,rounds` CSV file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print the least-squares slope of log(rounds) against log(P)
    /// (to standard error when the CSV goes to standard output).
    #[arg(long)]
    slope: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    input: MeshInput,
    #[command(flatten)]
    parallel: ParallelArgs,
    /// Step ranks in a fresh seeded random order each round (sequential otherwise).
    #[arg(long, conflicts_with = "threads")]
    seed: Option<u64>,
    /// Step ranks concurrently on a thread pool.
    #[arg(long)]
    threads: bool,
    /// Write a one-row `P,rounds` CSV.
    #[arg(long)]
    emit_rounds: Option<PathBuf>,
    /// Write the resulting orientation.
    #[arg(long)]
    emit_orientation: Option<PathBuf>,
    /// Write the cell partition as `<cell> <rank>` lines.
    #[arg(long)]
    dump_partition: Option<PathBuf>,
}

fn read_mesh(input: &MeshInput) -> Result<QuadMesh> {
    let format = match input.format {
        Some(f) => f,
        None => match input.mesh.extension().and_then(|e| e.to_str()) {
            Some("mesh") => Format::Native,
            Some("msh") => Format::Msh,
            _ => bail!("cannot tell the format of {}; pass --format", input.mesh.display()),
        },
    };
    let text = fs::read_to_string(&input.mesh).with_context(|| format!("reading {}", input.mesh.display()))?;
    let mesh = match format {
        Format::Native => read_native(&text),
        Format::Msh => read_msh(&text),
    }
    .with_context(|| format!("parsing {}", input.mesh.display()))?;
    match input.grid {
        Some(grid) => Ok(mesh.with_grid_layout(grid)?),
        None => Ok(mesh),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => io::stdout().lock().write_all(text.as_bytes()).context("writing to standard output"),
    }
}

fn cmd_gen(args: &GenArgs) -> Result<()> {
    let mesh = args.params.family(args.kind)?.build()?;
    emit(args.out.as_deref(), &write_native(&mesh))?;
    eprintln!("{} vertices, {} cells, {} edges", mesh.num_vertices(), mesh.num_cells(), mesh.num_edges());
    Ok(())
}

fn cmd_orient(args: &OrientArgs) -> Result<()> {
    let mesh = read_mesh(&args.input)?;
    let map = match args.algo {
        Algo::Serial => orient_serial(&mesh)?,
        Algo::Unionfind => orient_unionfind(&mesh)?,
        Algo::Parallel => {
            let p = args.parallel.np as usize;
            let partition = partition_cells(&mesh, p, args.parallel.partitioner)?;
            let (map, trace) = run_partitioned(&mesh, partition, Schedule::Sequential)?;
            eprintln!("P = {p}: {} rounds (k = {})", trace.rounds, trace.k_observed);
            map
        }
    };
    emit(args.out.as_deref(), &write_orientation(&mesh, &map))?;
    eprintln!("oriented {} edges", map.len());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<()> {
    let mesh = read_mesh(&args.input)?;
    let path = &args.orientation;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map = read_orientation(&mesh, &text).with_context(|| format!("parsing {}", path.display()))?;
    match check_consistent(&mesh, &map) {
        Ok(()) => {
            println!("consistent: {} edges, {} cells", mesh.num_edges(), mesh.num_cells());
            Ok(())
        }
        Err(VerifyError::Inconsistent(violations)) => {
            for v in &violations {
                eprintln!("{v}");
            }
            bail!("{} violated cell constraints", violations.len())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_ribbons(args: &RibbonsArgs) -> Result<()> {
    let mesh = read_mesh(&args.input)?;
    let part = ribbons(&mesh);
    let mut out = format!("{} ribbons\n", part.len());
    for (r, members) in part.ribbons().iter().enumerate() {
        let edges: Vec<String> = members.iter().map(|&e| mesh.edge(e).to_string()).collect();
        out.push_str(&format!("ribbon {r} ({} edges): {}\n", members.len(), edges.join(" ")));
    }
    emit(None, &out)
}

fn cmd_scale(args: &ScaleArgs) -> Result<()> {
    let family = args.params.family(args.kind)?;
    let method = args.partitioner.unwrap_or_else(|| family.default_partitioner());
    let ps: Vec<usize> = args.np.iter().map(|&p| p as usize).collect();
    let rows = scaling_sweep(&family, &ps, method)?;
    emit(args.out.as_deref(), &write_rounds_csv(&rows)?)?;
    if args.slope {
        let line = format!("slope {:.4}", loglog_slope(&rows));
        if args.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mesh = read_mesh(&args.input)?;
    let p = args.parallel.np as usize;
    let partition = partition_cells(&mesh, p, args.parallel.partitioner)?;
    if let Some(path) = &args.dump_partition {
        emit(Some(path), &partition.to_text())?;
    }
    let schedule = match (args.seed, args.threads) {
        (Some(seed), _) => Schedule::Shuffled(seed),
        (None, true) => Schedule::Threaded,
        (None, false) => Schedule::Sequential,
    };
    let (map, trace) = run_partitioned(&mesh, partition, schedule)?;
    let flags: Vec<&str> = trace.conflicts.iter().map(|&c| if c { "1" } else { "0" }).collect();
    println!("processes {p}");
    println!("rounds {}", trace.rounds);
    println!("k_observed {}", trace.k_observed);
    println!("conflicts {}", flags.join(" "));
    if let Some(path) = &args.emit_rounds {
        emit(Some(path), &write_rounds_csv(&[(p as u64, trace.rounds as u64)])?)?;
    }
    if let Some(path) = &args.emit_orientation {
        emit(Some(path), &write_orientation(&mesh, &map))?;
    }
    Ok(())
}

fn moebius_witness(err: &anyhow::Error) -> Option<&MoebiusError> {
    err.chain().find_map(|cause| {
        if let Some(m) = cause.downcast_ref::<MoebiusError>() {
            return Some(m);
        }
        match cause.downcast_ref::<ParallelError>() {
            Some(ParallelError::Moebius(m)) => Some(m),
            _ => match cause.downcast_ref::<SweepError>() {
                Some(SweepError::Run { source: ParallelError::Moebius(m), .. }) => Some(m),
                _ => None,
            },
        }
    })
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Orient(a) => cmd_orient(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Ribbons(a) => cmd_ribbons(a),
        Command::Scale(a) => cmd_scale(a),
        Command::Simulate(a) => cmd_simulate(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::FAILURE,
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(m) = moebius_witness(&err) {
                eprintln!("error: {m}");
                return ExitCode::from(EXIT_MOEBIUS);
            }
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
