//! Batch front end. Every subcommand writes CSV to `--out` (stdout by
//! default) and, where it makes sense, an SVG figure to `--plot`.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::criticality::{self, System};
use crate::diagnostics;
use crate::dynamics::TwistSystem;
use crate::error::{Error, Result};
use crate::geometry::{build_geometry, Annular, ConfigMap, TrackGeometry, GEOMETRY_KEYS};
use crate::maps::{angled_composite, angled_eigen, eigen, ShearConfig};
use crate::plot;
use crate::segments::{self, SegmentKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;

const DEFAULT_ALPHA: f64 = 7.0;
const DEFAULT_K: u32 = 2;

#[derive(Debug, Parser)]
#[command(name = "twistflow", version, about = "Linked twist maps on a figure-eight track and their surgered flow")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// `key = value` file with track_length, width_w, layer_gap_d1, alpha, k, seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// CSV destination; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// SVG figure destination.
    #[arg(long, global = true)]
    plot: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all outputs are independent of this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    k: Option<u32>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SystemArg {
    Single,
    Double,
    Both,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues of the composite shear and the slope ratio L.
    Eigen,
    /// Critical shear strengths for the one- and two-square cases.
    Critical {
        #[arg(long, value_enum, default_value = "both")]
        system: SystemArg,
        #[arg(long, default_value_t = criticality::DEFAULT_ETA)]
        eta: f64,
    },
    /// Iterates of the crossing map from one point.
    Orbit {
        #[arg(long, default_value_t = 0.3)]
        s: f64,
        #[arg(long, default_value_t = 0.1)]
        u: f64,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
    /// Samples of the surgered flow from one point.
    Flow {
        #[arg(long, default_value_t = 0.03)]
        s: f64,
        #[arg(long, default_value_t = 0.1)]
        u: f64,
        #[arg(long, default_value_t = 0.0)]
        theta: f64,
        #[arg(long, default_value_t = 10.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
    },
    /// Expansion certificates for random unstable segments.
    SegmentCertify {
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
    },
    /// Top Lyapunov exponent over an ensemble of orbits.
    Lyapunov {
        #[arg(long, default_value_t = 100)]
        orbits: usize,
        #[arg(long, default_value_t = 100_000)]
        iters: usize,
    },
    /// Occupancy discrepancy from Lebesgue measure.
    Ergodicity {
        #[arg(long, default_value_t = 50)]
        grid_n: usize,
        #[arg(long, default_value_t = 1_000_000)]
        n_iters: usize,
        #[arg(long, default_value_t = 1)]
        n_orbits: usize,
    },
    /// Intersection volume of a flowed lobe cube with a fixed one.
    NwmDemo {
        /// Fibre half-width; defaults to a quarter of the layer gap.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 100.0)]
        t_max: f64,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Eigenvalues of the angled-lobe composite over φ ∈ [0, π/2].
    AngleSweep {
        #[arg(long = "A", default_value_t = 3.0)]
        a: f64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
}

struct Settings {
    cfg: ConfigMap,
    seed: u64,
    alpha: Option<f64>,
    k: Option<u32>,
}

impl Settings {
    fn load(g: &Global) -> Result<Self> {
        let cfg = match &g.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
                let mut allowed = GEOMETRY_KEYS.to_vec();
                allowed.extend(["alpha", "k"]);
                ConfigMap::parse(&text, &allowed)?
            }
            None => ConfigMap::default(),
        };
        let seed = match g.seed {
            Some(s) => s,
            None => cfg.get_u64("seed")?.unwrap_or(0),
        };
        let alpha = match g.alpha {
            Some(a) => Some(a),
            None => cfg.get_f64("alpha")?,
        };
        let k = match g.k {
            Some(k) => Some(k),
            None => cfg.get_u64("k")?.map(|k| u32::try_from(k).map_err(|_| Error::Config(format!("k = {k} too large")))).transpose()?,
        };
        Ok(Self { cfg, seed, alpha, k })
    }

    fn geometry_entries(&self) -> ConfigMap {
        let mut m = self.cfg.clone();
        m.entries.retain(|k, _| k != "alpha" && k != "k" && k != "seed");
        m
    }

    /// Shear strength on its own, for subcommands without a track.
    fn alpha_only(&self) -> f64 {
        self.alpha.unwrap_or(DEFAULT_ALPHA)
    }

    /// Track and shear with `α·w = k·ℓ`. With both values given the width is
    /// derived; with one given the other follows from the configured width.
    fn system(&self) -> Result<TwistSystem> {
        let geo = self.geometry_entries();
        let d = TrackGeometry::default();
        let ell = geo.get_f64("track_length")?.unwrap_or(d.track_length);
        let d1 = geo.get_f64("layer_gap_d1")?.unwrap_or(d.layer_gap_d1);
        let width = geo.get_f64("width_w")?;
        match (self.alpha, self.k) {
            (alpha, k) if width.is_none() || (alpha.is_some() && k.is_some()) => {
                let (alpha, k) = (alpha.unwrap_or(DEFAULT_ALPHA), k.unwrap_or(DEFAULT_K));
                let g = TrackGeometry::for_winding(alpha, k, ell, d1)?;
                if let Some(w) = width {
                    if (w - g.width_w).abs() > 1e-12 * w {
                        return Err(Error::Config(format!(
                            "width_w = {w} contradicts alpha = {alpha}, k = {k} (which need w = {})",
                            g.width_w
                        )));
                    }
                }
                let shear = ShearConfig::new(alpha, k, &g)?;
                Ok(TwistSystem::new(g, shear))
            }
            (None, Some(k)) => {
                let g = build_geometry(&geo)?;
                let shear = ShearConfig::from_k(k, &g)?;
                Ok(TwistSystem::new(g, shear))
            }
            (Some(alpha), None) => {
                let g = build_geometry(&geo)?;
                let shear = ShearConfig::from_alpha(alpha, &g)?;
                Ok(TwistSystem::new(g, shear))
            }
            _ => {
                let g = build_geometry(&geo)?;
                Err(Error::Config(format!("width_w = {} given without alpha or k", g.width_w)))
            }
        }
    }
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.global.threads {
        Some(0) => Err(Error::Parameter("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::Parameter(format!("cannot start worker pool: {e}"))),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NoCertificate(_) | Error::NoRoot(..) | Error::NonReturned(_) => EXIT_NONCONVERGENCE,
                _ => EXIT_VALIDATION,
            }
        }
    }
}

type Sink = csv::Writer<Box<dyn Write>>;

fn sink(out: &Option<PathBuf>) -> Result<Sink> {
    let w: Box<dyn Write> = match out {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).map_err(|e| Error::Config(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(w))
}

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Config(format!("write failed: {e}"))
}

fn row<S: AsRef<[u8]>>(w: &mut Sink, fields: impl IntoIterator<Item = S>) -> Result<()> {
    w.write_record(fields).map_err(io_err)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn write_plot(path: &Option<PathBuf>, svg: impl FnOnce() -> String) -> Result<()> {
    if let Some(p) = path {
        fs::write(p, svg()).map_err(|e| Error::Config(format!("cannot write {}: {e}", p.display())))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let st = Settings::load(&cli.global)?;
    let mut w = sink(&cli.global.out)?;
    let code = match &cli.command {
        Command::Eigen => {
            let a = st.alpha_only();
            let e = eigen(a)?;
            row(&mut w, ["alpha", "lambda_plus", "lambda_minus", "L"])?;
            row(&mut w, [num(a), num(e.lambda_plus), num(e.lambda_minus), num(e.l_ratio)])?;
            EXIT_OK
        }
        Command::Critical { system, eta } => {
            let systems: &[System] = match system {
                SystemArg::Single => &[System::SingleSquare],
                SystemArg::Double => &[System::DoubleSquare],
                SystemArg::Both => &[System::SingleSquare, System::DoubleSquare],
            };
            row(&mut w, ["system", "alpha_star", "residual", "bracket_lo", "bracket_hi", "eta"])?;
            for &s in systems {
                let r = criticality::solve_critical_eta(s, *eta, criticality::DEFAULT_TOL)?;
                row(&mut w, [s.name().to_string(), num(r.alpha_star), num(r.residual), num(r.bracket.0), num(r.bracket.1), num(r.eta)])?;
                eprintln!(
                    "{} square: growth budget closes for alpha > {:.4} (residual {:.1e}, eta = {})",
                    s.name(),
                    r.alpha_star,
                    r.residual,
                    r.eta
                );
            }
            EXIT_OK
        }
        Command::Orbit { s, u, n } => {
            let sys = st.system()?;
            let g = &sys.geom;
            let p0 = Annular::new(g.wrap_s(*s), *u);
            if !(p0.u >= 0.0 && p0.u < g.width_w) {
                return Err(Error::Parameter(format!("u = {u} outside [0, {})", g.width_w)));
            }
            row(&mut w, ["n", "s", "u", "x", "y", "region"])?;
            for (i, p) in sys.orbit(p0, *n).into_iter().enumerate() {
                let f = g.fold(&g.point(p));
                row(&mut w, [i.to_string(), num(p.s), num(p.u), num(f.x), num(f.y), format!("{:?}", f.region)])?;
            }
            EXIT_OK
        }
        Command::Flow { s, u, theta, t_max, dt } => {
            let sys = st.system()?;
            let g = &sys.geom;
            if !(*dt > 0.0 && *t_max >= 0.0) {
                return Err(Error::Parameter("need dt > 0 and t_max ≥ 0".into()));
            }
            let p0 = Annular::new(g.wrap_s(*s), *u);
            if !(p0.u >= 0.0 && p0.u < g.width_w) {
                return Err(Error::Parameter(format!("u = {u} outside [0, {})", g.width_w)));
            }
            row(&mut w, ["t", "x", "y", "region", "theta", "layer"])?;
            let mut state = sys.flow_state(p0, *theta);
            let steps = (t_max / dt + 1e-9).floor() as usize;
            for i in 0..=steps {
                if i > 0 {
                    state = sys.flow_psi(&state, *dt)?.0;
                }
                let b = state.base;
                row(&mut w, [num(i as f64 * dt), num(b.x), num(b.y), format!("{:?}", b.region), num(state.theta), format!("{:?}", state.layer)])?;
            }
            EXIT_OK
        }
        Command::SegmentCertify { trials, max_iters } => {
            let sys = st.system()?;
            use rayon::prelude::*;
            let results: Vec<_> = (0..*trials)
                .into_par_iter()
                .map(|i| {
                    let mut rng = diagnostics::stream_rng(st.seed, i as u64);
                    let gamma = segments::random_unstable_segment(&mut rng, &sys, (0.005, 0.05));
                    segments::certify_expansion(&gamma, &sys, *max_iters)
                })
                .collect();
            row(&mut w, ["trial", "iters_to_certificate", "best_delta", "outcome"])?;
            let mut failed = false;
            for (i, r) in results.iter().enumerate() {
                match r {
                    Ok(c) => {
                        let kind = match c.kind {
                            SegmentKind::Vertical => "v_segment",
                            SegmentKind::Horizontal => "h_segment",
                        };
                        let bd = c.best_delta.map(num).unwrap_or_default();
                        row(&mut w, [i.to_string(), c.iterations.to_string(), bd, kind.to_string()])?;
                    }
                    Err(Error::NoCertificate(_)) => {
                        failed = true;
                        row(&mut w, [i.to_string(), String::new(), String::new(), "no_certificate".to_string()])?;
                    }
                    Err(e) => return Err(e.clone()),
                }
            }
            if failed {
                EXIT_NONCONVERGENCE
            } else {
                EXIT_OK
            }
        }
        Command::Lyapunov { orbits, iters } => {
            let sys = st.system()?;
            let rep = diagnostics::lyapunov(&sys, *orbits, *iters, st.seed)?;
            row(&mut w, ["orbit", "exponent", "reference_log_lambda"])?;
            for (i, e) in rep.per_orbit.iter().enumerate() {
                row(&mut w, [i.to_string(), num(*e), num(rep.reference_log_lambda)])?;
            }
            eprintln!(
                "median exponent {:.6} (ln|λ+| = {:.6}), {} orbits excluded",
                rep.exponent_estimate, rep.reference_log_lambda, rep.excluded
            );
            write_plot(&cli.global.plot, || {
                plot::histogram("Top Lyapunov exponent per orbit", "exponent", &rep.per_orbit, 40, Some(rep.reference_log_lambda))
            })?;
            EXIT_OK
        }
        Command::Ergodicity { grid_n, n_iters, n_orbits } => {
            let sys = st.system()?;
            let rep = diagnostics::equidistribution(&sys, *grid_n, *n_iters, *n_orbits, st.seed)?;
            row(&mut w, ["grid_n", "n_iters", "discrepancy"])?;
            row(&mut w, [grid_n.to_string(), n_iters.to_string(), num(rep.discrepancy)])?;
            write_plot(&cli.global.plot, || {
                let tot = rep.occupancy.total() as f64;
                let k = rep.occupancy.counts.len() as f64;
                let rel: Vec<f64> = rep.occupancy.counts.iter().map(|&c| c as f64 * k / tot).collect();
                plot::heatmap("Occupancy relative to uniform", "s / ℓ", "u / w", &rel, *grid_n)
            })?;
            EXIT_OK
        }
        Command::NwmDemo { epsilon, t_max, dt, samples } => {
            let sys = st.system()?;
            let (a, b) = diagnostics::lobe_cube_pair(&sys, epsilon.unwrap_or(sys.geom.layer_gap_d1 / 4.0))?;
            let tr = diagnostics::non_weak_mixing_demo(&sys, &a, &b, *t_max, *dt, *samples, st.seed)?;
            row(&mut w, ["t", "intersection_measure", "zero"])?;
            for ((t, m), h) in tr.times.iter().zip(&tr.intersection_measure).zip(&tr.hits) {
                row(&mut w, [num(*t), num(*m), u8::from(*h == 0).to_string()])?;
            }
            eprintln!(
                "zero-intersection fraction {:.4}; a zero sample bounds the volume by {:.3e}",
                tr.zero_fraction, tr.zero_upper_bound
            );
            write_plot(&cli.global.plot, || {
                plot::line_plot("Estimated vol(Ψ_t(A) ∩ B)", "t", "volume", &tr.times, &tr.intersection_measure)
            })?;
            EXIT_OK
        }
        Command::AngleSweep { a, steps } => {
            if *steps == 0 {
                return Err(Error::Parameter("--steps must be positive".into()));
            }
            row(&mut w, ["phi", "lambda_plus", "lambda_minus", "det_error"])?;
            let mut phis = Vec::with_capacity(*steps);
            let mut lp = Vec::with_capacity(*steps);
            for i in 0..*steps {
                let phi = if *steps == 1 { 0.0 } else { std::f64::consts::FRAC_PI_2 * i as f64 / (*steps - 1) as f64 };
                let (p, m) = angled_eigen(*a, phi)?;
                let det_err = (angled_composite(*a, phi)?.det() - 1.0).abs();
                row(&mut w, [num(phi), num(p), num(m), num(det_err)])?;
                phis.push(phi);
                lp.push(p);
            }
            write_plot(&cli.global.plot, || plot::line_plot("Angled-lobe expanding eigenvalue", "φ", "λ+", &phis, &lp))?;
            EXIT_OK
        }
    };
    w.flush().map_err(io_err)?;
    Ok(code)
}
