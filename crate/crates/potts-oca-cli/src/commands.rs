//! Subcommand argument sets and handlers.
//!
//! Every flag can also come from a `--config` file (key = flag name);
//! flags win. Randomized commands write `<out>.manifest.json` beside
//! their primary file output so a run can be reproduced exactly.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;

use potts_oca::gmm::{self, GmmOptions};
use potts_oca::hidden::{
    self, EmissionModel, GibbsOptions, ObservationField, PredictSpec, Priors,
};
use potts_oca::io;
use potts_oca::metrics::crps_empirical;
use potts_oca::potts::{self, FitObjective, PottsParams};
use potts_oca::rng::{master_rng, replicate_rng};
use potts_oca::sampler::{self, FieldSampler};
use potts_oca::{Lattice, OcaPlan};

use crate::cfg::{
    emit, parse_f64_list, parse_usize_list, usage, write_manifest, CliResult, Resolver,
};

/// Past sites default to twice the future depth; that split spends a
/// fixed window budget where it lowers estimator variance most.
fn resolve_depths(
    res: &mut Resolver,
    m_future: Option<usize>,
    m_past: Option<usize>,
    default_future: usize,
) -> CliResult<(usize, usize)> {
    let mf = res.or("m-future", m_future, default_future)?;
    let mg = res.or("m-past", m_past, 2 * mf)?;
    Ok((mg, mf))
}

fn build_lattice(rows: usize, cols: usize) -> CliResult<Lattice> {
    Ok(Lattice::new(rows, cols)?)
}

/// Observation input: a real-valued grid CSV or a P2 PGM image. The
/// paths come through the resolver so a config file can supply them.
fn load_observations(
    res: &mut Resolver,
    obs: Option<PathBuf>,
    pgm: Option<PathBuf>,
) -> CliResult<(Lattice, Vec<f64>)> {
    let obs = res.opt("obs", obs.map(display_path))?;
    let pgm = res.opt("pgm", pgm.map(display_path))?;
    match (obs, pgm) {
        (Some(path), None) => Ok(io::read_real_grid(Path::new(&path))?),
        (None, Some(path)) => Ok(io::read_pgm(Path::new(&path))?),
        (Some(_), Some(_)) => Err(usage("give --obs or --pgm, not both")),
        (None, None) => Err(usage("missing observations: give --obs or --pgm")),
    }
}

fn prior_args(
    res: &mut Resolver,
    k: usize,
    means: Option<String>,
    sd0: Option<f64>,
    alpha: Option<f64>,
    eta: Option<f64>,
) -> CliResult<Priors> {
    let default_means = (1..=k)
        .map(|j| j.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let means = parse_f64_list(&res.or("prior-means", means, default_means)?)?;
    let sd0 = res.or("prior-sd0", sd0, 0.1)?;
    let alpha = res.or("prior-alpha", alpha, 1.5)?;
    let eta = res.or("prior-eta", eta, 0.135)?;
    if means.len() != k {
        return Err(usage(format!(
            "--prior-means needs {k} values, got {}",
            means.len()
        )));
    }
    Ok(Priors::new(means, sd0, alpha, eta)?)
}

fn emission_args(
    res: &mut Resolver,
    mu: Option<String>,
    sigma: Option<String>,
) -> CliResult<Option<EmissionModel>> {
    let mu = res.opt("mu", mu)?;
    let sigma = res.opt("sigma", sigma)?;
    match (mu, sigma) {
        (None, None) => Ok(None),
        (Some(mu), Some(sigma)) => Ok(Some(EmissionModel::new(
            parse_f64_list(&mu)?,
            parse_f64_list(&sigma)?,
        )?)),
        _ => Err(usage("--mu and --sigma go together")),
    }
}

fn header(columns: &[String]) -> String {
    format!("{}\n", columns.join(","))
}

// ---------------------------------------------------------------- simulate

/// Draw one Potts field and optionally Gaussian observations of it.
#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Flat key=value config file; flags override its entries
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    /// Number of states K
    #[arg(long)]
    pub k: Option<usize>,
    /// Interaction strength (attraction convention, beta >= 0)
    #[arg(long)]
    pub beta: Option<f64>,
    /// RNG seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Field sampler: "oca" (single-pass joint draw) or "sw"
    #[arg(long)]
    pub sampler: Option<String>,
    /// Marginalized-future depth for the oca sampler (default 4)
    #[arg(long)]
    pub m_future: Option<usize>,
    /// Conditioned-past depth (default 2 * m-future)
    #[arg(long)]
    pub m_past: Option<usize>,
    /// Swendsen-Wang sweeps for the sw sampler (default 300)
    #[arg(long)]
    pub sw_sweeps: Option<usize>,
    /// Label grid CSV to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Emission means per class, e.g. "1,2,3" (with --sigma adds noise)
    #[arg(long)]
    pub mu: Option<String>,
    /// Emission standard deviations per class
    #[arg(long)]
    pub sigma: Option<String>,
    /// Observation grid CSV to write (needs --mu/--sigma)
    #[arg(long)]
    pub obs_out: Option<PathBuf>,
    /// Size of the rayon thread pool (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run_simulate(args: SimulateArgs, res: &mut Resolver) -> CliResult<()> {
    let rows = res.req("rows", args.rows)?;
    let cols = res.req("cols", args.cols)?;
    let k = res.req("k", args.k)?;
    let beta = res.req("beta", args.beta)?;
    let seed = res.or("seed", args.seed, 0)?;
    let sampler_name = res.or("sampler", args.sampler, "oca".to_string())?;
    let sw_sweeps = res.or("sw-sweeps", args.sw_sweeps, 300)?;
    let out = res.req("out", args.out.map(display_path))?;
    let emission = emission_args(res, args.mu, args.sigma)?;
    let obs_out = res.opt("obs-out", args.obs_out.map(display_path))?;
    if emission.is_some() && obs_out.is_none() {
        return Err(usage("--mu/--sigma need --obs-out to write observations"));
    }

    let lattice = build_lattice(rows, cols)?;
    let params = PottsParams::new(k, beta)?;
    let mut rng = master_rng(seed);
    // The field is drawn first, then the noise, from one stream, so an
    // observed pair (z, y) is reproducible from the seed alone.
    let z = match sampler_name.as_str() {
        "oca" => {
            let (mg, mf) = resolve_depths(res, args.m_future, args.m_past, 4)?;
            let plan = OcaPlan::build(lattice, mg, mf, true);
            sampler::oca_sample(&plan, params, &mut rng)?
        }
        "sw" => sampler::swendsen_wang_run(lattice, params, sw_sweeps, &mut rng),
        other => return Err(usage(format!("unknown sampler '{other}'"))),
    };

    let out = PathBuf::from(out);
    io::write_label_grid(&out, lattice, &z)?;
    if let Some(obs_path) = &obs_out {
        let emission = emission
            .as_ref()
            .ok_or_else(|| usage("--obs-out needs --mu and --sigma"))?;
        if emission.k() != k {
            return Err(usage(format!("--mu/--sigma need {k} values")));
        }
        let y = hidden::simulate_observations(&z, emission, &mut rng)?;
        io::write_real_grid(&PathBuf::from(obs_path), lattice, &y)?;
    }
    write_manifest(&out, "simulate", seed, &res.effective())?;
    println!("S(z) = {}", potts::summary_stat(lattice, &z));
    Ok(())
}

fn display_path(p: PathBuf) -> String {
    p.display().to_string()
}

// ------------------------------------------------------------ loglik-curve

/// Evaluate the windowed log-likelihood over a beta grid.
#[derive(Args, Debug)]
pub struct LoglikCurveArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// "observed" scores a label field; "hidden" integrates the latent
    /// field out of a noisy observation grid
    #[arg(long)]
    pub model: Option<String>,
    /// Label grid CSV (observed model)
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Observation grid CSV (hidden model)
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// P2 PGM image instead of --obs
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Beta values: comma list or lo:hi:step grid
    #[arg(long)]
    pub betas: Option<String>,
    #[arg(long)]
    pub m_future: Option<usize>,
    #[arg(long)]
    pub m_past: Option<usize>,
    /// Emission means per class (hidden model)
    #[arg(long)]
    pub mu: Option<String>,
    /// Emission standard deviations per class (hidden model)
    #[arg(long)]
    pub sigma: Option<String>,
    /// Add a brute-force enumeration column (tiny grids only)
    #[arg(long)]
    pub with_exact: bool,
    /// Output CSV (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run_loglik_curve(args: LoglikCurveArgs, res: &mut Resolver) -> CliResult<()> {
    use rayon::prelude::*;

    let model = res.or("model", args.model, "observed".to_string())?;
    let k = res.req("k", args.k)?;
    let betas = parse_f64_list(&res.req("betas", args.betas)?)?;
    let (mg, mf) = resolve_depths(res, args.m_future, args.m_past, 4)?;
    let with_exact = res.switch("with-exact", args.with_exact)?;
    let out = res.opt("out", args.out.map(display_path))?;

    enum Curve {
        Observed(Lattice, Vec<u8>),
        Hidden(Lattice, ObservationField, EmissionModel),
    }
    let curve = match model.as_str() {
        "observed" => {
            let input = res.req("input", args.input.map(display_path))?;
            let (lattice, labels) = io::read_label_grid(&PathBuf::from(input))?;
            if let Some(&l) = labels.iter().find(|&&l| l as usize >= k) {
                return Err(usage(format!("label {} exceeds K={k}", l as usize + 1)));
            }
            Curve::Observed(lattice, labels)
        }
        "hidden" => {
            let (lattice, y) = load_observations(res, args.obs, args.pgm)?;
            let emission = emission_args(res, args.mu, args.sigma)?
                .ok_or_else(|| usage("hidden model needs --mu and --sigma"))?;
            if emission.k() != k {
                return Err(usage(format!("--mu/--sigma need {k} values")));
            }
            Curve::Hidden(lattice, ObservationField::new(y)?, emission)
        }
        other => return Err(usage(format!("unknown model '{other}'"))),
    };

    let lattice = match &curve {
        Curve::Observed(l, _) => *l,
        Curve::Hidden(l, _, _) => *l,
    };
    let plan = OcaPlan::build(lattice, mg, mf, true);
    // One row per beta; rows evaluate in parallel and each windowed
    // evaluation is itself parallel across sites.
    let rows: CliResult<Vec<(f64, f64, Option<f64>)>> = betas
        .par_iter()
        .map(|&beta| {
            let params = PottsParams::new(k, beta)?;
            let (value, exact) = match &curve {
                Curve::Observed(lattice, labels) => (
                    potts::oca_log_likelihood(&plan, params, labels)?,
                    if with_exact {
                        Some(potts::exact_log_density(*lattice, params, labels)?)
                    } else {
                        None
                    },
                ),
                Curve::Hidden(lattice, obs, emission) => (
                    hidden::oca_marginal_log_likelihood(&plan, params, emission, obs)?,
                    if with_exact {
                        Some(hidden::exact_marginal_log_likelihood(
                            *lattice, params, emission, obs,
                        )?)
                    } else {
                        None
                    },
                ),
            };
            Ok((beta, value, exact))
        })
        .collect();

    let mut text = if with_exact {
        header(&["beta".into(), "loglik".into(), "exact".into()])
    } else {
        header(&["beta".into(), "loglik".into()])
    };
    for (beta, value, exact) in rows? {
        match exact {
            Some(e) => text.push_str(&format!("{beta},{value},{e}\n")),
            None => text.push_str(&format!("{beta},{value}\n")),
        }
    }
    emit(out.as_deref().map(std::path::Path::new), &text)
}

// ------------------------------------------------------------------- fit

/// Maximum-likelihood estimate of beta from a label field.
#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Label grid CSV
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Objective: "oca", "pseudo", or "both" (default)
    #[arg(long)]
    pub objective: Option<String>,
    #[arg(long)]
    pub m_future: Option<usize>,
    #[arg(long)]
    pub m_past: Option<usize>,
    /// Upper end of the search interval (default 2)
    #[arg(long)]
    pub beta_max: Option<f64>,
    /// Absolute tolerance on the estimate (default 1e-4)
    #[arg(long)]
    pub tol: Option<f64>,
    /// Report CSV (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run_fit(args: FitArgs, res: &mut Resolver) -> CliResult<()> {
    let input = res.req("input", args.input.map(display_path))?;
    let k = res.req("k", args.k)?;
    let objective = res.or("objective", args.objective, "both".to_string())?;
    let (mg, mf) = resolve_depths(res, args.m_future, args.m_past, 4)?;
    let beta_max = res.or("beta-max", args.beta_max, 2.0)?;
    let tol = res.or("tol", args.tol, 1e-4)?;
    let out = res.opt("out", args.out.map(display_path))?;

    let (lattice, labels) = io::read_label_grid(&PathBuf::from(input))?;
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= k) {
        return Err(usage(format!("label {} exceeds K={k}", l as usize + 1)));
    }
    let objectives: Vec<(&str, FitObjective)> = match objective.as_str() {
        "oca" => vec![("oca", FitObjective::Oca)],
        "pseudo" => vec![("pseudo", FitObjective::Pseudo)],
        "both" => vec![("oca", FitObjective::Oca), ("pseudo", FitObjective::Pseudo)],
        other => return Err(usage(format!("unknown objective '{other}'"))),
    };

    let plan = OcaPlan::build(lattice, mg, mf, true);
    let mut text = header(&[
        "objective".into(),
        "beta".into(),
        "log_likelihood".into(),
        "boundary".into(),
        "seconds".into(),
    ]);
    for (name, obj) in objectives {
        let start = Instant::now();
        let fit = potts::fit_beta(&plan, k, &labels, obj, beta_max, tol)?;
        let seconds = start.elapsed().as_secs_f64();
        if fit.boundary {
            eprintln!(
                "warning: {name} estimate {:.6} sits on the search boundary; \
                 the likelihood may increase beyond --beta-max",
                fit.beta
            );
        }
        text.push_str(&format!(
            "{name},{},{},{},{seconds:.6}\n",
            fit.beta, fit.log_likelihood, fit.boundary
        ));
    }
    emit(out.as_deref().map(std::path::Path::new), &text)
}

// ----------------------------------------------------------------- sample

/// Repeated field draws; reports S(z) per replicate and per-beta
/// summaries, for checking a sampler against a reference.
#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub cols: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Beta values: comma list or lo:hi:step grid
    #[arg(long)]
    pub betas: Option<String>,
    #[arg(long)]
    pub replicates: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// "oca" or "sw"
    #[arg(long)]
    pub sampler: Option<String>,
    #[arg(long)]
    pub m_future: Option<usize>,
    #[arg(long)]
    pub m_past: Option<usize>,
    #[arg(long)]
    pub sw_sweeps: Option<usize>,
    /// Summary CSV (beta, mean, sd); default: stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-replicate CSV (beta, replicate, stat)
    #[arg(long)]
    pub records_out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run_sample(args: SampleArgs, res: &mut Resolver) -> CliResult<()> {
    let rows = res.req("rows", args.rows)?;
    let cols = res.req("cols", args.cols)?;
    let k = res.req("k", args.k)?;
    let betas = parse_f64_list(&res.req("betas", args.betas)?)?;
    let replicates = res.req("replicates", args.replicates)?;
    let seed = res.or("seed", args.seed, 0)?;
    let sampler_name = res.or("sampler", args.sampler, "oca".to_string())?;
    let sw_sweeps = res.or("sw-sweeps", args.sw_sweeps, 300)?;
    let out = res.opt("out", args.out.map(display_path))?;
    let records_out = res.opt("records-out", args.records_out.map(display_path))?;

    let lattice = build_lattice(rows, cols)?;
    let plan;
    let field_sampler = match sampler_name.as_str() {
        "oca" => {
            let (mg, mf) = resolve_depths(res, args.m_future, args.m_past, 4)?;
            plan = OcaPlan::build(lattice, mg, mf, true);
            FieldSampler::Oca(&plan)
        }
        "sw" => FieldSampler::SwendsenWang { sweeps: sw_sweeps },
        other => return Err(usage(format!("unknown sampler '{other}'"))),
    };

    let records = sampler::summary_experiment(lattice, k, &betas, replicates, &field_sampler, seed)?;
    if let Some(path) = &records_out {
        let mut text = header(&["beta".into(), "replicate".into(), "stat".into()]);
        for r in &records {
            text.push_str(&format!("{},{},{}\n", r.beta, r.replicate, r.stat));
        }
        emit(Some(std::path::Path::new(path)), &text)?;
    }
    let mut text = header(&["beta".into(), "mean".into(), "sd".into()]);
    for row in sampler::summarize(&records) {
        text.push_str(&format!("{},{},{}\n", row.beta, row.mean, row.sd));
    }
    emit(out.as_deref().map(std::path::Path::new), &text)?;
    let primary = out.as_ref().or(records_out.as_ref());
    if let Some(path) = primary {
        write_manifest(std::path::Path::new(path), "sample", seed, &res.effective())?;
    }
    Ok(())
}

// ------------------------------------------------------------------ gibbs

/// Full posterior sampler for the hidden model (or the mixture
/// baseline) on an observation grid.
#[derive(Args, Debug)]
pub struct GibbsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observation grid CSV
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// P2 PGM image instead of --obs
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// "oca" (spatial model, default) or "gmm" (independent mixture)
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub m_future: Option<usize>,
    #[arg(long)]
    pub m_past: Option<usize>,
    /// Random-walk sd for the coupling update (default 0.05)
    #[arg(long)]
    pub proposal_sd: Option<f64>,
    /// Prior means c_1..c_K (default "1,2,...,K")
    #[arg(long)]
    pub prior_means: Option<String>,
    /// Prior sd of each class mean (default 0.1)
    #[arg(long)]
    pub prior_sd0: Option<f64>,
    /// Inverse-gamma shape for class variances (default 1.5)
    #[arg(long)]
    pub prior_alpha: Option<f64>,
    /// Inverse-gamma scale for class variances (default 0.135)
    #[arg(long)]
    pub prior_eta: Option<f64>,
    /// Dirichlet hyperparameter for the gmm model (default 1/K)
    #[arg(long)]
    pub dirichlet_alpha: Option<f64>,
    /// Highest-posterior-probability label grid CSV
    #[arg(long)]
    pub hpp_out: Option<PathBuf>,
    /// Prefix for per-class probability rasters (<prefix>.class<j>.csv)
    #[arg(long)]
    pub probs_out: Option<PathBuf>,
    /// Trace CSV: iter, beta, mu_1..K, sigma_1..K (gmm: pi instead of beta)
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Sites to draw posterior-predictive values at, e.g. "5,17"
    #[arg(long)]
    pub predict_sites: Option<String>,
    /// Predictive draws per retained iteration per site (default 1)
    #[arg(long)]
    pub draws_per_site: Option<usize>,
    /// Predictive-sample CSV (site, draw, value); needs --predict-sites
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run_gibbs(args: GibbsArgs, res: &mut Resolver) -> CliResult<()> {
    let k = res.req("k", args.k)?;
    let model = res.or("model", args.model, "oca".to_string())?;
    let iterations = res.req("iterations", args.iterations)?;
    let burn_in = res.req("burn-in", args.burn_in)?;
    let seed = res.or("seed", args.seed, 0)?;
    let proposal_sd = res.or("proposal-sd", args.proposal_sd, 0.05)?;
    let priors = prior_args(
        res,
        k,
        args.prior_means,
        args.prior_sd0,
        args.prior_alpha,
        args.prior_eta,
    )?;
    let hpp_out = PathBuf::from(res.req("hpp-out", args.hpp_out.map(display_path))?);
    let probs_out = res.opt("probs-out", args.probs_out.map(display_path))?;
    let trace_out = res.opt("trace-out", args.trace_out.map(display_path))?;
    let predict_sites = res.opt("predict-sites", args.predict_sites)?;
    let draws_per_site = res.or("draws-per-site", args.draws_per_site, 1)?;
    let samples_out = res.opt("samples-out", args.samples_out.map(display_path))?;

    let (lattice, y) = load_observations(res, args.obs, args.pgm)?;
    let obs = ObservationField::new(y)?;
    let spec = match &predict_sites {
        None => None,
        Some(raw) => {
            let sites = parse_usize_list(raw)?;
            Some(PredictSpec {
                sites,
                draws_per_site,
            })
        }
    };
    if samples_out.is_some() && spec.is_none() {
        return Err(usage("--samples-out needs --predict-sites"));
    }

    // The initializer clusters the observations first; warn when that
    // clustering ran out its iteration cap instead of converging.
    let km = gmm::kmeans(obs.y(), k, 100)?;
    if km.wcss.len() >= 100 {
        eprintln!("warning: k-means initialization hit its iteration cap; continuing");
    }

    let mut rng = master_rng(seed);
    let summary;
    let n_by_k;
    let trace_text;
    let predictive;
    match model.as_str() {
        "oca" => {
            let (mg, mf) = resolve_depths(res, args.m_future, args.m_past, 4)?;
            let plan = OcaPlan::build(lattice, mg, mf, true);
            let init = hidden::default_init(&plan, &obs, k)?;
            let opts = GibbsOptions::new(iterations, burn_in)?.with_proposal_sd(proposal_sd)?;
            let run = hidden::run_gibbs(&plan, &obs, &priors, init, opts, &mut rng, spec.as_ref())?;
            let mut text = trace_header(k, "beta");
            for row in &run.trace {
                text.push_str(&format!("{},{}", row.iteration, row.beta));
                push_reals(&mut text, &row.mu);
                push_reals(&mut text, &row.sigma);
                text.push('\n');
            }
            trace_text = text;
            summary = format!(
                "retained {} of {} iterations; final beta {:.6}; beta acceptance rate {:.3}",
                run.retained,
                iterations,
                run.final_beta,
                run.beta_accepts as f64 / iterations as f64
            );
            io::write_label_grid(&hpp_out, lattice, &run.hpp())?;
            n_by_k = run.marginal_probs();
            predictive = run.predictive;
        }
        "gmm" => {
            let mut opts = GmmOptions::new(iterations, burn_in)?;
            if let Some(alpha) = res.opt("dirichlet-alpha", args.dirichlet_alpha)? {
                opts = opts.with_alpha(alpha)?;
            }
            let run = gmm::gmm_gibbs(&obs, &priors, opts, &mut rng, spec.as_ref())?;
            let mut text = trace_header(k, "pi");
            for row in &run.trace {
                text.push_str(&format!("{}", row.iteration));
                push_reals(&mut text, &row.pi);
                push_reals(&mut text, &row.mu);
                push_reals(&mut text, &row.sigma);
                text.push('\n');
            }
            trace_text = text;
            summary = format!("retained {} of {} iterations", run.retained, iterations);
            io::write_label_grid(&hpp_out, lattice, &run.hpp())?;
            n_by_k = run.marginal_probs();
            predictive = run.predictive;
        }
        other => return Err(usage(format!("unknown model '{other}'"))),
    }

    if let Some(prefix) = &probs_out {
        for class in 0..k {
            let raster: Vec<f64> = (0..lattice.len()).map(|i| n_by_k[i * k + class]).collect();
            let path = PathBuf::from(format!("{prefix}.class{}.csv", class + 1));
            io::write_real_grid(&path, lattice, &raster)?;
        }
    }
    if let Some(path) = &trace_out {
        emit(Some(std::path::Path::new(path)), &trace_text)?;
    }
    if let Some(path) = &samples_out {
        let spec = spec.as_ref().expect("checked above");
        let pools = predictive.ok_or_else(|| usage("no predictive draws were produced"))?;
        let mut text = header(&["site".into(), "draw".into(), "value".into()]);
        for (s, pool) in spec.sites.iter().zip(&pools) {
            for (d, v) in pool.iter().enumerate() {
                text.push_str(&format!("{s},{d},{v}\n"));
            }
        }
        emit(Some(std::path::Path::new(path)), &text)?;
    }
    write_manifest(&hpp_out, "gibbs", seed, &res.effective())?;
    println!("{summary}");
    Ok(())
}

fn trace_header(k: usize, coupling: &str) -> String {
    let mut cols = vec!["iter".to_string()];
    if coupling == "beta" {
        cols.push("beta".to_string());
    } else {
        cols.extend((1..=k).map(|j| format!("pi_{j}")));
    }
    cols.extend((1..=k).map(|j| format!("mu_{j}")));
    cols.extend((1..=k).map(|j| format!("sigma_{j}")));
    header(&cols)
}

fn push_reals(text: &mut String, values: &[f64]) {
    for v in values {
        text.push_str(&format!(",{v}"));
    }
}

// --------------------------------------------------------- predict-heldout

/// Hold out a random fraction of sites, refit on the rest, and score
/// posterior-predictive draws at the held sites by CRPS. Runs both the
/// spatial model and the mixture baseline on identical held-out sets.
#[derive(Args, Debug)]
pub struct PredictHeldoutArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Observation grid CSV
    #[arg(long)]
    pub obs: Option<PathBuf>,
    /// P2 PGM image instead of --obs
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Fraction of sites to hold out, strictly between 0 and 1
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Number of repetitions (default 10)
    #[arg(long)]
    pub reps: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Default 2 here: held-out scoring favors wide coverage over depth
    #[arg(long)]
    pub m_future: Option<usize>,
    #[arg(long)]
    pub m_past: Option<usize>,
    #[arg(long)]
    pub proposal_sd: Option<f64>,
    #[arg(long)]
    pub prior_means: Option<String>,
    #[arg(long)]
    pub prior_sd0: Option<f64>,
    #[arg(long)]
    pub prior_alpha: Option<f64>,
    #[arg(long)]
    pub prior_eta: Option<f64>,
    #[arg(long)]
    pub dirichlet_alpha: Option<f64>,
    /// Predictive draws per retained iteration per held site (default 10)
    #[arg(long)]
    pub draws_per_site: Option<usize>,
    /// Report CSV (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional CSV of repetition 0's spatial-model draws (site, draw, value)
    #[arg(long)]
    pub samples_out: Option<PathBuf>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn run_predict_heldout(args: PredictHeldoutArgs, res: &mut Resolver) -> CliResult<()> {
    let k = res.req("k", args.k)?;
    let fraction = res.req("fraction", args.fraction)?;
    let reps = res.or("reps", args.reps, 10)?;
    let iterations = res.req("iterations", args.iterations)?;
    let burn_in = res.req("burn-in", args.burn_in)?;
    let seed = res.or("seed", args.seed, 0)?;
    let (mg, mf) = resolve_depths(res, args.m_future, args.m_past, 2)?;
    let proposal_sd = res.or("proposal-sd", args.proposal_sd, 0.05)?;
    let priors = prior_args(
        res,
        k,
        args.prior_means,
        args.prior_sd0,
        args.prior_alpha,
        args.prior_eta,
    )?;
    let dirichlet_alpha = res.opt("dirichlet-alpha", args.dirichlet_alpha)?;
    let draws_per_site = res.or("draws-per-site", args.draws_per_site, 10)?;
    let out = res.opt("out", args.out.map(display_path))?;
    let samples_out = res.opt("samples-out", args.samples_out.map(display_path))?;

    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(usage(format!(
            "--fraction must be strictly between 0 and 1, got {fraction}"
        )));
    }

    let (lattice, y) = load_observations(res, args.obs, args.pgm)?;
    let n = lattice.len();
    let held = (fraction * n as f64).floor() as usize;
    let plan = OcaPlan::build(lattice, mg, mf, true);

    let mut text = header(&[
        "rep".into(),
        "seed".into(),
        "stream".into(),
        "method".into(),
        "mean_crps".into(),
    ]);
    let mut totals = [0.0f64; 2];
    let reps_run = if held == 0 {
        // A fraction too small to select any site is a valid request;
        // the report is just empty.
        eprintln!("note: fraction {fraction} selects 0 of {n} sites; empty report");
        0
    } else {
        reps
    };
    for rep in 0..reps_run {
        // One stream per repetition drives site choice and both model
        // runs, so any single repetition reruns from (seed, rep) alone.
        let mut rng = replicate_rng(seed, rep);
        let sites = choose_sites(n, held, &mut rng);
        let opts = GibbsOptions::new(iterations, burn_in)?.with_proposal_sd(proposal_sd)?;
        let oca_run =
            hidden::heldout_predict(&plan, &y, &sites, &priors, opts, draws_per_site, &mut rng)?;
        let mut gmm_opts = GmmOptions::new(iterations, burn_in)?;
        if let Some(alpha) = dirichlet_alpha {
            gmm_opts = gmm_opts.with_alpha(alpha)?;
        }
        let gmm_run =
            gmm::gmm_heldout_predict(&y, &sites, &priors, gmm_opts, draws_per_site, &mut rng)?;

        for (method, pools, slot) in [
            ("oca", oca_run.predictive.as_ref(), 0usize),
            ("gmm", gmm_run.predictive.as_ref(), 1usize),
        ] {
            let pools = pools.ok_or_else(|| usage("no predictive draws were produced"))?;
            let mut total = 0.0;
            for (site, pool) in sites.iter().zip(pools) {
                total += crps_empirical(pool, y[*site])?;
            }
            let mean = total / sites.len() as f64;
            totals[slot] += mean;
            text.push_str(&format!("{rep},{seed},{rep},{method},{mean}\n"));
        }
        if rep == 0 {
            if let Some(path) = &samples_out {
                let pools = oca_run.predictive.as_ref().expect("checked above");
                let mut sample_text = header(&["site".into(), "draw".into(), "value".into()]);
                for (s, pool) in sites.iter().zip(pools) {
                    for (d, v) in pool.iter().enumerate() {
                        sample_text.push_str(&format!("{s},{d},{v}\n"));
                    }
                }
                emit(Some(std::path::Path::new(path)), &sample_text)?;
            }
        }
    }
    emit(out.as_deref().map(std::path::Path::new), &text)?;
    if let Some(path) = &out {
        write_manifest(
            std::path::Path::new(path),
            "predict-heldout",
            seed,
            &res.effective(),
        )?;
    }
    if held > 0 {
        println!(
            "oca mean CRPS {:.6}; gmm mean CRPS {:.6} (over {reps} repetitions)",
            totals[0] / reps as f64,
            totals[1] / reps as f64
        );
    }
    Ok(())
}

/// First `held` entries of a partial Fisher-Yates shuffle, sorted.
fn choose_sites<R: rand::Rng>(n: usize, held: usize, rng: &mut R) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..held {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    let mut sites = pool[..held].to_vec();
    sites.sort_unstable();
    sites
}

// -------------------------------------------------------------- benchmark

/// Wall-clock scaling of the windowed log-likelihood over lattice
/// size, future depth, and thread count.
#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Square side lengths, e.g. "32,64,128"
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Future depths to sweep (default "2,4,6")
    #[arg(long)]
    pub m_futures: Option<String>,
    /// Thread counts to sweep (default "1,4")
    #[arg(long)]
    pub thread_counts: Option<String>,
    /// Timed evaluations per point; the median is reported (default 5)
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_benchmark(args: BenchmarkArgs, res: &mut Resolver) -> CliResult<()> {
    let sizes = parse_usize_list(&res.or("sizes", args.sizes, "32,64,128".to_string())?)?;
    let k = res.or("k", args.k, 2)?;
    let beta = res.or("beta", args.beta, 0.5)?;
    let m_futures = parse_usize_list(&res.or("m-futures", args.m_futures, "2,4,6".to_string())?)?;
    let threads = parse_usize_list(&res.or(
        "thread-counts",
        args.thread_counts,
        "1,4".to_string(),
    )?)?;
    let repeats = res.or("repeats", args.repeats, 5)?.max(1);
    let seed = res.or("seed", args.seed, 0)?;
    let out = res.opt("out", args.out.map(display_path))?;

    let params = PottsParams::new(k, beta)?;
    let mut text = header(&[
        "n".into(),
        "m_f".into(),
        "threads".into(),
        "seconds".into(),
    ]);
    let mut speedup_ends: Option<(f64, f64)> = None;
    for (s_idx, &side) in sizes.iter().enumerate() {
        let lattice = build_lattice(side, side)?;
        // One field per size, shared by every ladder point so timings
        // differ only in depth and thread count.
        let gen_plan = OcaPlan::build(lattice, 4, 2, true);
        let mut rng = replicate_rng(seed, s_idx as u64);
        let z = sampler::oca_sample(&gen_plan, params, &mut rng)?;
        for &mf in &m_futures {
            let plan = OcaPlan::build(lattice, 2 * mf, mf, true);
            for &t in &threads {
                if t == 0 {
                    return Err(usage("thread counts must be positive"));
                }
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| usage(format!("cannot build thread pool: {e}")))?;
                let median = pool.install(|| -> CliResult<f64> {
                    potts::oca_log_likelihood(&plan, params, &z)?;
                    let mut times = Vec::with_capacity(repeats);
                    for _ in 0..repeats {
                        let start = Instant::now();
                        std::hint::black_box(potts::oca_log_likelihood(&plan, params, &z)?);
                        times.push(start.elapsed().as_secs_f64());
                    }
                    times.sort_by(f64::total_cmp);
                    Ok(times[times.len() / 2])
                })?;
                text.push_str(&format!("{},{mf},{t},{median:.6}\n", lattice.len()));
                if s_idx == sizes.len() - 1 && mf == *m_futures.last().unwrap() {
                    if t == threads[0] {
                        speedup_ends = Some((median, median));
                    } else if let Some((first, _)) = speedup_ends {
                        speedup_ends = Some((first, median));
                    }
                }
            }
        }
    }
    emit(out.as_deref().map(std::path::Path::new), &text)?;
    if let Some(path) = &out {
        write_manifest(std::path::Path::new(path), "benchmark", seed, &res.effective())?;
    }
    if threads.len() > 1 {
        if let Some((first, last)) = speedup_ends {
            println!(
                "threads {} -> {} speedup at the largest point: {:.2}x",
                threads[0],
                threads.last().unwrap(),
                first / last
            );
        }
    }
    Ok(())
}
