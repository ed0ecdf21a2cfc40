use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use boxqi::boxspline::{self, RationalTable};
use boxqi::domain::{ClassKey, DataPoints, IndexSet};
use boxqi::isosurface::{self, IsoRequest, MeshFormat};
use boxqi::nearbest::{self, SolveStatus};
use boxqi::qi::{self, QiSpline};
use boxqi::volume::{self, Dtype, Endianness, TestFunction, VolumeHeader};
use boxqi::{par, rational, stencils, DomainGrid, Point};

/// C² quartic box-spline quasi-interpolation of volume data.
#[derive(Parser)]
#[command(name = "boxqi", version)]
struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "BOXQI_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derive the l1-minimal functional of one boundary class by exact simplex.
    Derive {
        /// Class key `p,q,r`.
        #[arg(long, allow_hyphen_values = true)]
        class: String,
        /// Octahedron radius.
        #[arg(long)]
        n: u32,
        /// Tie weights under the symmetries of the class (`--tie false` to disable).
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        tie: bool,
        #[arg(long, value_enum, default_value_t = TextOrJson::Text)]
        format: TextOrJson,
    },
    /// Optimal l1 norms over classes and radii, as CSV.
    NormTable {
        /// Class keys (repeatable); all known classes when omitted.
        #[arg(long, allow_hyphen_values = true)]
        class: Vec<String>,
        /// Radius or inclusive range `a..b`.
        #[arg(long, default_value = "1..6")]
        n: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the embedded functional library as JSON.
    Stencils {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the box spline's Bézier patches as exact rationals (JSON).
    Table {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a test function on the data points, as CSV.
    Sample {
        #[arg(long = "fn")]
        function: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build a spline from a test function or a raw volume.
    Approximate {
        #[command(flatten)]
        source: Source,
        /// Spline file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a saved spline at points, or measure its error on a grid.
    Eval {
        /// Spline file.
        #[arg(long = "in")]
        input: PathBuf,
        /// World-coordinate point `x,y,z` (repeatable).
        #[arg(long, allow_hyphen_values = true)]
        point: Vec<String>,
        /// Evaluation grid points per axis, endpoints included.
        #[arg(long)]
        grid: Option<usize>,
        /// Reference function for the error (defaults to the spline's tag).
        #[arg(long = "fn")]
        function: Option<String>,
        /// Derivative order `a,b,c` for point evaluation.
        #[arg(long)]
        derivative: Option<String>,
    },
    /// Maximum errors and observed orders for a test function, as CSV.
    Convergence {
        #[arg(long = "fn")]
        function: String,
        /// Comma-separated grid sizes.
        #[arg(long, default_value = "16,32,64")]
        m: String,
        #[arg(long, default_value_t = 139)]
        grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract an isosurface mesh.
    Isosurface {
        #[command(flatten)]
        source: Source,
        /// Spline file (instead of --fn or --volume).
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        iso: f64,
        /// Sampling points per axis.
        #[arg(long, default_value_t = 128)]
        res: usize,
        /// Polish vertices onto the spline's level set.
        #[arg(long)]
        refine: bool,
        /// Store |f - Qf| per vertex (test functions only; PLY keeps it).
        #[arg(long)]
        color: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        format: Option<MeshKind>,
    },
    /// Grid facts: index-set size, norm bound, memory estimates.
    Info {
        /// Cubes per axis: `m` or `m1,m2,m3`.
        #[arg(long, default_value = "11")]
        m: String,
        #[arg(long, default_value_t = 1.0)]
        h: f64,
    },
}

#[derive(Args)]
struct Source {
    /// Test function id (f1, f2, f3).
    #[arg(long = "fn")]
    function: Option<String>,
    /// Cubes per axis for a test function.
    #[arg(long)]
    m: Option<usize>,
    /// Raw volume; the header comes from `<file>.json` unless --dims is given.
    #[arg(long)]
    volume: Option<PathBuf>,
    /// Voxel counts `N1,N2,N3` (overrides the sidecar).
    #[arg(long)]
    dims: Option<String>,
    #[arg(long, value_enum, default_value_t = DtypeArg::U8)]
    dtype: DtypeArg,
    #[arg(long)]
    big_endian: bool,
    /// Physical voxel spacing `sx,sy,sz`.
    #[arg(long)]
    spacing: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TextOrJson {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeshKind {
    Obj,
    Ply,
}

#[derive(Clone, Copy, ValueEnum)]
enum DtypeArg {
    U8,
    U16,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match par::with_threads(cli.threads, || run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Derive { class, n, tie, format } => cmd_derive(&class, n, tie, format),
        Command::NormTable { class, n, out } => cmd_norm_table(&class, &n, out.as_deref()),
        Command::Stencils { out } => {
            let lib = stencils::library()?;
            let text = serde_json::to_string_pretty(&lib.to_json())?;
            emit(out.as_deref(), format!("{text}\n").as_bytes())
        }
        Command::Table { out } => {
            let t = RationalTable::from_table(boxspline::table())?;
            t.audit_partition_of_unity()?;
            emit(out.as_deref(), format!("{}\n", t.to_json()).as_bytes())
        }
        Command::Sample { function, m, out } => cmd_sample(&function, m, out.as_deref()),
        Command::Approximate { source, out } => cmd_approximate(&source, &out),
        Command::Eval { input, point, grid, function, derivative } => {
            cmd_eval(&input, &point, grid, function.as_deref(), derivative.as_deref())
        }
        Command::Convergence { function, m, grid, out } => cmd_convergence(&function, &m, grid, out.as_deref()),
        Command::Isosurface { source, input, iso, res, refine, color, out, format } => {
            cmd_isosurface(&source, input.as_deref(), iso, res, refine, color, &out, format)
        }
        Command::Info { m, h } => cmd_info(&m, h),
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().lock().write_all(bytes)?;
            Ok(())
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| anyhow::anyhow!("invalid {what} `{s}`")))
        .collect()
}

fn parse_triple<T: std::str::FromStr + Copy>(s: &str, what: &str) -> Result<[T; 3]> {
    let v: Vec<T> = parse_list(s, what)?;
    match v.as_slice() {
        [a] => Ok([*a; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => bail!("{what} needs one or three comma-separated values, got `{s}`"),
    }
}

fn parse_range(s: &str) -> Result<std::ops::RangeInclusive<u32>> {
    let (a, b) = match s.split_once("..") {
        Some((a, b)) => (a, b.trim_start_matches('=')),
        None => (s, s),
    };
    let a: u32 = a.trim().parse().with_context(|| format!("invalid radius range `{s}`"))?;
    let b: u32 = b.trim().parse().with_context(|| format!("invalid radius range `{s}`"))?;
    if a == 0 || b < a {
        bail!("radius range `{s}` must be nonempty and start at 1 or more");
    }
    Ok(a..=b)
}

fn cmd_derive(class: &str, n: u32, tie: bool, format: TextOrJson) -> Result<()> {
    let key = ClassKey::parse(class)?;
    let t = Instant::now();
    let (sys, sol) = nearbest::derive(key, n, tie)?;
    let elapsed = t.elapsed().as_secs_f64();
    let optimal = sol.status == SolveStatus::Optimal;
    match format {
        TextOrJson::Json => {
            let v = serde_json::json!({
                "class": key.0,
                "n": n,
                "tie": tie,
                "rows": sys.row_count(),
                "variables": sys.column_count(),
                "status": if optimal { "optimal" } else { "infeasible" },
                "l1": sol.norm_f64(),
                "l1_exact": optimal.then(|| rational::format(&sol.norm)),
                "weights": sol.weights.iter().map(|(b, w)| serde_json::json!({
                    "beta": b,
                    "weight": rational::format(w),
                })).collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        TextOrJson::Text => {
            println!("class {key}, n = {n}: {} rows, {} variables", sys.row_count(), sys.column_count());
            if !optimal {
                println!("infeasible");
            } else {
                println!("l1 = {} = {}", rational::format(&sol.norm), rational::to_f64(&sol.norm));
                for (b, w) in &sol.weights {
                    println!("  ({},{},{})  {}", b[0], b[1], b[2], rational::format(w));
                }
            }
            eprintln!("solved in {elapsed:.2}s");
        }
    }
    Ok(())
}

fn cmd_norm_table(classes: &[String], n: &str, out: Option<&Path>) -> Result<()> {
    let keys: Vec<ClassKey> = if classes.is_empty() {
        ClassKey::ALL.to_vec()
    } else {
        classes.iter().map(|c| ClassKey::parse(c)).collect::<boxqi::Result<_>>()?
    };
    let rows = nearbest::norm_table(&keys, parse_range(n)?)?;
    let mut csv = String::from("class,n,status,l1,l1_rounded_up,l1_exact\n");
    for row in rows {
        for (n, cell) in row.cells {
            let class = format!("\"{},{},{}\"", row.key.0[0], row.key.0[1], row.key.0[2]);
            match cell {
                Some(r) => csv.push_str(&format!(
                    "{class},{n},optimal,{},{},{}\n",
                    rational::to_f64(&r),
                    rational::ceil_sig(&r, 4),
                    rational::format(&r)
                )),
                None => csv.push_str(&format!("{class},{n},infeasible,,,\n")),
            }
        }
    }
    emit(out, csv.as_bytes())
}

fn cmd_sample(function: &str, m: usize, out: Option<&Path>) -> Result<()> {
    let f = TestFunction::parse(function)?;
    let s = volume::sample_test_function(f, m)?;
    let dp = DataPoints::new(&s.grid);
    let mut csv = String::from("i,j,k,x,y,z,value\n");
    for (o, (b, p)) in dp.iter().enumerate() {
        let w = s.to_world(p);
        csv.push_str(&format!("{},{},{},{},{},{},{}\n", b[0], b[1], b[2], w[0], w[1], w[2], s.samples.values()[o]));
    }
    emit(out, csv.as_bytes())
}

/// Spline plus the physical scale applied to output geometry.
fn build_spline(src: &Source) -> Result<(QiSpline, Option<TestFunction>, [f64; 3])> {
    match (&src.function, &src.volume) {
        (Some(_), Some(_)) => bail!("give either --fn or --volume, not both"),
        (Some(f), None) => {
            let f = TestFunction::parse(f)?;
            let m = src.m.context("--fn needs --m")?;
            Ok((volume::approximate_test_function(f, m)?, Some(f), [1.0; 3]))
        }
        (None, Some(path)) => {
            let header = match &src.dims {
                Some(d) => Some(VolumeHeader {
                    dims: parse_triple(d, "--dims")?,
                    dtype: match src.dtype {
                        DtypeArg::U8 => Dtype::U8,
                        DtypeArg::U16 => Dtype::U16,
                    },
                    endianness: if src.big_endian { Endianness::Big } else { Endianness::Little },
                    spacing: src.spacing.as_deref().map(|s| parse_triple(s, "--spacing")).transpose()?,
                }),
                None => None,
            };
            let (header, samples, grid) =
                volume::load_raw(path, header).with_context(|| format!("reading {}", path.display()))?;
            let tag = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((qi::approximate(&samples, &grid)?.with_tag(tag), None, header.scale()))
        }
        (None, None) => bail!("give --fn with --m, or --volume"),
    }
}

fn load_spline(path: &Path) -> Result<QiSpline> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(QiSpline::load(&mut BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?)
}

fn cmd_approximate(src: &Source, out: &Path) -> Result<()> {
    let t = Instant::now();
    let (s, _, _) = build_spline(src)?;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    s.save(&mut w)?;
    w.flush()?;
    let g = s.grid();
    println!(
        "m = {:?}, h = {}, {} coefficients written to {}",
        g.m(),
        g.h(),
        IndexSet::new(g).len(),
        out.display()
    );
    eprintln!("done in {:.2}s", t.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_eval(input: &Path, points: &[String], grid: Option<usize>, function: Option<&str>, derivative: Option<&str>) -> Result<()> {
    let s = load_spline(input)?;
    if points.is_empty() && grid.is_none() {
        bail!("give --point or --grid");
    }
    let gamma: Option<[u32; 3]> = derivative.map(|d| parse_triple(d, "--derivative")).transpose()?;
    let o = s.origin();
    for p in points {
        let w: Point = parse_triple(p, "--point")?;
        let local: Point = std::array::from_fn(|a| w[a] - o[a]);
        let v = match gamma {
            Some(g) => s.eval_derivative(local, g)?,
            None => s.eval(local)?,
        };
        println!("{v}");
    }
    if let Some(n) = grid {
        let reference = match function {
            Some(f) => Some(TestFunction::parse(f)?),
            None => TestFunction::parse(s.tag()).ok(),
        };
        match reference {
            Some(f) => {
                let e = volume::max_error(&s, |p| f.eval(p), n)?;
                println!("max_error {e}");
            }
            None => {
                let v = s.eval_grid(n)?;
                let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
                println!("min {lo}\nmax {hi}");
            }
        }
    }
    Ok(())
}

fn cmd_convergence(function: &str, m: &str, grid: usize, out: Option<&Path>) -> Result<()> {
    let f = TestFunction::parse(function)?;
    let mut ms: Vec<usize> = parse_list(m, "--m")?;
    ms.sort_unstable();
    ms.dedup();
    let mut csv = String::from("fn,m,h,max_error,rf\n");
    let mut prev: Option<(usize, f64)> = None;
    for m in ms {
        let s = volume::approximate_test_function(f, m)?;
        let e = volume::max_error(&s, |p| f.eval(p), grid)?;
        let rf = match prev {
            Some((pm, pe)) if pm * 2 == m => format!("{}", (pe / e).log2()),
            _ => String::new(),
        };
        csv.push_str(&format!("{f},{m},{},{e},{rf}\n", s.grid().h()));
        prev = Some((m, e));
    }
    emit(out, csv.as_bytes())
}

#[allow(clippy::too_many_arguments)]
fn cmd_isosurface(
    src: &Source,
    input: Option<&Path>,
    iso: f64,
    res: usize,
    refine: bool,
    color: bool,
    out: &Path,
    format: Option<MeshKind>,
) -> Result<()> {
    let (s, f, scale) = match input {
        Some(p) => {
            let s = load_spline(p)?;
            let f = TestFunction::parse(s.tag()).ok();
            (s, f, [1.0; 3])
        }
        None => build_spline(src)?,
    };
    let reference = f.map(|f| move |p: Point| f.eval(p));
    let mut req = IsoRequest::new(iso, res);
    if refine {
        req = req.refined();
    }
    if color {
        match &reference {
            Some(r) => req = req.with_reference(r),
            None => bail!("--color needs a test function to compare against"),
        }
    }
    let t = Instant::now();
    let mut mesh = isosurface::extract(&s, &req)?;
    let residual = mesh.max_residual(&s, iso)?;
    if scale != [1.0; 3] {
        mesh.map_vertices(|v| std::array::from_fn(|a| v[a] * scale[a]));
    }
    let format = match format {
        Some(MeshKind::Obj) => MeshFormat::Obj,
        Some(MeshKind::Ply) => MeshFormat::Ply,
        None => MeshFormat::from_path(out),
    };
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    isosurface::write_mesh(&mesh, format, &mut w)?;
    w.flush()?;
    println!("{} vertices, {} triangles, max |s - iso| = {residual:e}", mesh.vertices.len(), mesh.triangles.len());
    if let Some(sc) = &mesh.scalars {
        println!("max |f - s| on vertices = {:e}", sc.iter().fold(0.0f64, |a, &b| a.max(b)));
    }
    eprintln!("done in {:.2}s", t.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_info(m: &str, h: f64) -> Result<()> {
    let grid = DomainGrid::new(parse_triple(m, "--m")?, h)?;
    let set = IndexSet::new(&grid);
    let lib = stencils::library()?;
    println!("grid m = {:?}, h = {h}, extent = {:?}", grid.m(), grid.extent());
    println!("cubes: {}", grid.cube_count());
    println!("tetrahedra: {}", grid.cube_count() * 24);
    println!("index set |A|: {}", set.len());
    println!("data points: {}", DataPoints::new(&grid).len());
    println!(
        "operator norm bound: {} ({})",
        rational::ceil_sig(&lib.norm_bound(), 4),
        rational::format(&lib.norm_bound())
    );
    let coef_bytes = set.box_dims().iter().product::<usize>() * 8;
    println!("coefficient bytes: {coef_bytes}");
    println!("compiled patch bytes: {}", qi::compiled_bytes(&grid));
    if let Err(e) = grid.require_qi() {
        println!("note: {e}");
    }
    Ok(())
}
