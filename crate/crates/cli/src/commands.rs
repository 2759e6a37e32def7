//! The four subcommands. Each takes a resolved [`Config`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lassomix::diagnostics::{
    adjusted_rand_index, align_labels, cocluster, gamma_accuracy, hierarchical_cluster, median_model,
    selection_frequency, Linkage,
};
use lassomix::finance::{
    compute_features_with, strategy_sharpe, FeatureSettings, PriceSeries, StrategyParams, FEATURE_NAMES,
};
use lassomix::pgibbs::{run_chain_with, ChainConfig, TraceRecord};
use lassomix::simgen::{default_dispersion, simulate as simulate_data, SimSettings};
use lassomix::{Dataset, Hyperparameters, ResampleTrigger, ResamplingScheme};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, RunManifest};
use crate::csvio::{self, fmt_f64, fmt_opt, numbered, write_rows};
use crate::CliError;

const MODEL_KEYS: [&str; 7] = ["K", "delta", "dof", "a", "b", "lambda", "phi"];
const SAMPLER_KEYS: [&str; 6] = ["particles", "nu_tau", "nu_s", "ess_fraction", "resampling", "trigger"];

fn allowed(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.concat()
}

fn set_model_defaults(cfg: &mut Config) {
    let h = Hyperparameters::default();
    cfg.set_default("K", h.k);
    cfg.set_default("delta", h.delta);
    cfg.set_default("dof", h.dof);
    cfg.set_default("a", h.a);
    cfg.set_default("b", h.b);
    cfg.set_default("lambda", h.lambda);
    cfg.set_default("phi", h.phi);
    cfg.set_default("particles", h.particles);
    cfg.set_default("nu_tau", h.nu_tau);
    cfg.set_default("nu_s", h.nu_s);
    cfg.set_default("ess_fraction", h.ess_fraction);
    cfg.set_default("resampling", "multinomial");
    cfg.set_default("trigger", "adaptive");
}

fn hyperparameters(cfg: &Config) -> Result<Hyperparameters, CliError> {
    let scheme = match cfg.raw("resampling").unwrap_or("multinomial") {
        "multinomial" => ResamplingScheme::Multinomial,
        "systematic" => ResamplingScheme::Systematic,
        other => return Err(CliError::Usage(format!("unknown resampling scheme `{other}`"))),
    };
    let trigger = match cfg.raw("trigger").unwrap_or("adaptive") {
        "adaptive" => ResampleTrigger::Adaptive,
        "every-step" => ResampleTrigger::EveryStep,
        other => return Err(CliError::Usage(format!("unknown resampling trigger `{other}`"))),
    };
    let h = Hyperparameters {
        k: cfg.get("K")?,
        delta: cfg.get("delta")?,
        dof: cfg.get("dof")?,
        a: cfg.get("a")?,
        b: cfg.get("b")?,
        lambda: cfg.get("lambda")?,
        phi: cfg.get("phi")?,
        particles: cfg.get("particles")?,
        nu_tau: cfg.get("nu_tau")?,
        nu_s: cfg.get("nu_s")?,
        ess_fraction: cfg.get("ess_fraction")?,
        scheme,
        trigger,
    };
    h.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(h)
}

fn output_dir(cfg: &mut Config, command: &str) -> Result<PathBuf, CliError> {
    cfg.set_default("out", format!("results/{command}"));
    let dir = PathBuf::from(cfg.raw("out").unwrap_or_default());
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn required_path(cfg: &Config, key: &str) -> Result<PathBuf, CliError> {
    cfg.raw(key)
        .map(PathBuf::from)
        .ok_or_else(|| CliError::Usage(format!("`{key}` is required")))
}

pub fn simulate(mut cfg: Config) -> Result<(), CliError> {
    cfg.check_keys(&allowed(&[&["seed", "out", "n", "p", "dispersion"], &MODEL_KEYS]))?;
    cfg.set_default("seed", 1);
    cfg.set_default("n", 50);
    cfg.set_default("p", 20);
    set_model_defaults(&mut cfg);
    let k: usize = cfg.get("K")?;
    let dispersion = default_dispersion(k).iter().map(|d| fmt_f64(*d)).collect::<Vec<_>>().join(",");
    cfg.set_default("dispersion", dispersion);
    let dir = output_dir(&mut cfg, "simulate")?;
    // Sampler keys have no effect here; keep them out of the manifest.
    let mut shown = Config::default();
    for (key, value) in cfg.settings() {
        if !SAMPLER_KEYS.contains(&key) {
            shown.set(key, value);
        }
    }
    RunManifest::new("simulate", &shown).write(&dir)?;

    let hyper = hyperparameters(&cfg)?;
    let covariate_dispersion = cfg
        .raw("dispersion")
        .unwrap_or_default()
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Usage(format!("dispersion: {e}")))?;
    let settings = SimSettings {
        n: cfg.get("n")?,
        p: cfg.get("p")?,
        hyper,
        covariate_dispersion,
        seed: cfg.get("seed")?,
    };
    settings.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sim = simulate_data(&settings)?;
    csvio::write_dataset(&dir.join("data.csv"), &sim.data)?;
    csvio::write_labels(&dir.join("truth_labels.csv"), &sim.state.z)?;
    csvio::write_gamma(&dir.join("truth_gamma.csv"), &sim.state.params.gamma)?;
    let mut header = vec!["component".to_string(), "weight".to_string(), "sigma2".to_string()];
    header.extend(numbered("x", settings.p));
    let rows = (0..k).map(|c| {
        [(c + 1).to_string(), fmt_f64(sim.weights[c]), fmt_f64(sim.sigma2[c])]
            .into_iter()
            .chain(sim.beta[c].iter().map(|v| fmt_f64(*v)))
            .collect::<Vec<_>>()
    });
    write_rows(&dir.join("truth_beta.csv"), &header, rows)?;
    log::info!("wrote {} observations to {}", settings.n, dir.display());
    Ok(())
}

pub fn fit(mut cfg: Config) -> Result<(), CliError> {
    cfg.check_keys(&allowed(&[
        &["seed", "out", "data", "iterations", "burn_in", "thin"],
        &MODEL_KEYS,
        &SAMPLER_KEYS,
    ]))?;
    let defaults = ChainConfig::default();
    cfg.set_default("seed", defaults.seed);
    cfg.set_default("iterations", defaults.iterations);
    cfg.set_default("burn_in", defaults.burn_in);
    cfg.set_default("thin", defaults.thinning);
    set_model_defaults(&mut cfg);
    let data_path = required_path(&cfg, "data")?;
    let dir = output_dir(&mut cfg, "fit")?;
    let hyper = hyperparameters(&cfg)?;
    let chain = ChainConfig {
        iterations: cfg.get("iterations")?,
        burn_in: cfg.get("burn_in")?,
        thinning: cfg.get("thin")?,
        seed: cfg.get("seed")?,
    };
    chain.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let bytes = csvio::read_bytes(&data_path)?;
    let mut manifest = RunManifest::new("fit", &cfg);
    manifest.add_digest("data", &bytes);
    manifest.write(&dir)?;
    let data = csvio::parse_dataset(&bytes)?;
    if data.n() < hyper.k {
        return Err(CliError::Data(format!("{} observations for {} components", data.n(), hyper.k)));
    }

    let step = (chain.iterations / 10).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(chain.seed);
    let result = run_chain_with(&data, &hyper, &chain, &mut rng, |rec: &TraceRecord| {
        if (rec.iteration + 1) % step == 0 {
            log::info!(
                "iteration {}/{}: log target {:.3}, min ESS/N {:.3}",
                rec.iteration + 1,
                chain.iterations,
                rec.log_target,
                rec.ess_min
            );
        }
    })?;

    let (n, p, k) = (data.n(), data.p(), hyper.k);
    let mut header = vec!["iteration".to_string()];
    header.extend(numbered("z", n));
    let rows = result.samples.iter().zip(&result.sample_iterations).map(|(s, it)| {
        std::iter::once(it.to_string()).chain(s.z.iter().map(|l| (l + 1).to_string()))
    });
    write_rows(&dir.join("samples_z.csv"), &header, rows)?;

    let mut header = vec!["iteration".to_string(), "component".to_string()];
    header.extend(numbered("x", p));
    let mut gamma_rows = Vec::new();
    let mut tau_rows = Vec::new();
    for (s, it) in result.samples.iter().zip(&result.sample_iterations) {
        for c in 0..k {
            let lead = [it.to_string(), (c + 1).to_string()];
            let g = &s.params.gamma[c];
            gamma_rows.push(lead.iter().cloned().chain(g.iter().map(|&b| u8::from(b).to_string())).collect::<Vec<_>>());
            tau_rows.push(
                lead.iter()
                    .cloned()
                    .chain((0..p).map(|d| if d > 0 && g[d] { fmt_f64(s.params.tau2[(c, d)]) } else { String::new() }))
                    .collect::<Vec<_>>(),
            );
        }
    }
    write_rows(&dir.join("samples_gamma.csv"), &header, gamma_rows)?;
    write_rows(&dir.join("samples_tau2.csv"), &header, tau_rows)?;

    let header: Vec<String> = [
        "iteration",
        "log_target",
        "log_evidence",
        "ess_min",
        "ess_mean",
        "unique_paths",
        "resample_count",
        "tau_acceptance",
        "s_acceptance",
        "gamma_acceptance",
    ]
    .map(String::from)
    .to_vec();
    let rows = result.trace.iter().map(|r| {
        [
            r.iteration.to_string(),
            fmt_f64(r.log_target),
            fmt_f64(r.log_evidence),
            fmt_f64(r.ess_min),
            fmt_f64(r.ess_mean),
            fmt_f64(r.unique_paths),
            r.resample_count.to_string(),
            fmt_opt(r.counters.tau_rate()),
            fmt_opt(r.counters.s_rate()),
            fmt_opt(r.counters.gamma_rate()),
        ]
    });
    write_rows(&dir.join("trace.csv"), &header, rows)?;
    let c = result.counters;
    log::info!(
        "acceptance: tau {}, s {}, gamma {}",
        fmt_opt(c.tau_rate()),
        fmt_opt(c.s_rate()),
        fmt_opt(c.gamma_rate())
    );
    Ok(())
}

/// Label and inclusion samples read back from a `fit` directory.
struct Samples {
    iterations: Vec<usize>,
    z: Vec<Vec<usize>>,
    gamma: Vec<Vec<Vec<bool>>>,
    k: usize,
}

fn parse_samples(z_bytes: &[u8], gamma_bytes: &[u8]) -> Result<Samples, CliError> {
    let bad = |name: &str, msg: String| CliError::Data(format!("{name}: {msg}"));
    let gt = csvio::parse_table(gamma_bytes, "samples_gamma.csv")?;
    if gt.header.len() < 3 || gt.header[0] != "iteration" || gt.header[1] != "component" {
        return Err(bad("samples_gamma.csv", "header must be `iteration,component,x1,...`".into()));
    }
    let mut by_iter: BTreeMap<usize, BTreeMap<usize, Vec<bool>>> = BTreeMap::new();
    for (r, row) in gt.rows.iter().enumerate() {
        let parse = |cell: &str| {
            cell.parse::<usize>()
                .map_err(|_| bad("samples_gamma.csv", format!("row {}: bad integer {cell:?}", r + 1)))
        };
        let it = parse(&row[0])?;
        let c = parse(&row[1])?;
        if c == 0 {
            return Err(bad("samples_gamma.csv", format!("row {}: components are 1-based", r + 1)));
        }
        let flags = row[2..]
            .iter()
            .map(|v| match v.as_str() {
                "0" => Ok(false),
                "1" => Ok(true),
                _ => Err(bad("samples_gamma.csv", format!("row {}: expected 0 or 1, got {v:?}", r + 1))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        by_iter.entry(it).or_default().insert(c - 1, flags);
    }
    let k = by_iter.values().next().map_or(0, BTreeMap::len);
    if k == 0 {
        return Err(bad("samples_gamma.csv", "no samples".into()));
    }
    let mut gamma_of = BTreeMap::new();
    for (it, comps) in by_iter {
        if comps.len() != k || comps.keys().copied().ne(0..k) {
            return Err(bad("samples_gamma.csv", format!("iteration {it} does not list components 1..={k}")));
        }
        gamma_of.insert(it, comps.into_values().collect::<Vec<_>>());
    }

    let zt = csvio::parse_table(z_bytes, "samples_z.csv")?;
    if zt.header.len() < 2 || zt.header[0] != "iteration" {
        return Err(bad("samples_z.csv", "header must be `iteration,z1,...`".into()));
    }
    let mut out = Samples { iterations: Vec::new(), z: Vec::new(), gamma: Vec::new(), k };
    for (r, row) in zt.rows.iter().enumerate() {
        let it: usize = row[0]
            .parse()
            .map_err(|_| bad("samples_z.csv", format!("row {}: bad iteration {:?}", r + 1, row[0])))?;
        let z = row[1..]
            .iter()
            .map(|v| match v.parse::<usize>() {
                Ok(l) if (1..=k).contains(&l) => Ok(l - 1),
                _ => Err(bad("samples_z.csv", format!("row {}: label {v:?} is not in 1..={k}", r + 1))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let gamma = gamma_of
            .remove(&it)
            .ok_or_else(|| bad("samples_gamma.csv", format!("missing iteration {it}")))?;
        out.iterations.push(it);
        out.z.push(z);
        out.gamma.push(gamma);
    }
    if !gamma_of.is_empty() {
        return Err(bad("samples_z.csv", "label samples and inclusion samples cover different iterations".into()));
    }
    if out.z.is_empty() {
        return Err(bad("samples_z.csv", "no samples".into()));
    }
    Ok(out)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

pub fn diagnose(mut cfg: Config) -> Result<(), CliError> {
    cfg.check_keys(&allowed(&[&["out", "fit_dir", "truth_labels", "truth_gamma", "K", "linkage"]]))?;
    cfg.set_default("linkage", "average");
    let fit_dir = required_path(&cfg, "fit_dir")?;
    let linkage: Linkage = cfg.get("linkage")?;
    let dir = output_dir(&mut cfg, "diagnose")?;

    let z_bytes = csvio::read_bytes(&fit_dir.join("samples_z.csv"))?;
    let gamma_bytes = csvio::read_bytes(&fit_dir.join("samples_gamma.csv"))?;
    let read_opt = |key: &str| -> Result<Option<Vec<u8>>, CliError> {
        cfg.raw(key).map(|p| csvio::read_bytes(Path::new(p))).transpose()
    };
    let truth_labels = read_opt("truth_labels")?;
    let truth_gamma = read_opt("truth_gamma")?;
    let mut manifest = RunManifest::new("diagnose", &cfg);
    manifest.add_digest("samples_z", &z_bytes);
    manifest.add_digest("samples_gamma", &gamma_bytes);
    if let Some(b) = &truth_labels {
        manifest.add_digest("truth_labels", b);
    }
    if let Some(b) = &truth_gamma {
        manifest.add_digest("truth_gamma", b);
    }
    manifest.write(&dir)?;

    let samples = parse_samples(&z_bytes, &gamma_bytes)?;
    let k = samples.k;
    let n = samples.z[0].len();
    let cut_k: usize = match cfg.raw("K") {
        Some(_) => cfg.get("K")?,
        None => k,
    };
    if cut_k == 0 || cut_k > n {
        return Err(CliError::Usage(format!("cannot cut {n} observations into {cut_k} clusters")));
    }
    let truth_labels = truth_labels
        .map(|b| csvio::parse_labels(&b, k, "truth_labels.csv"))
        .transpose()?;
    if let Some(t) = &truth_labels {
        if t.len() != n {
            return Err(CliError::Data(format!("truth_labels.csv has {} rows for {n} observations", t.len())));
        }
    }
    let truth_gamma = truth_gamma.map(|b| csvio::parse_gamma(&b, "truth_gamma.csv")).transpose()?;

    let co = cocluster(&samples.z)?;
    let items = numbered("", n);
    let mut header = vec!["item".to_string()];
    header.extend(items.iter().cloned());
    let freq = &co.frequency;
    let rows = (0..n).map(|i| {
        std::iter::once((i + 1).to_string()).chain((0..n).map(move |j| fmt_f64(freq[(i, j)])))
    });
    write_rows(&dir.join("cocluster.csv"), &header, rows)?;

    let tree = hierarchical_cluster(&co.dissimilarity(), linkage)?;
    csvio::write_text(&dir.join("mergetree.txt"), &tree.to_text())?;
    let hard = tree.cut(cut_k)?;
    csvio::write_labels(&dir.join(format!("hard_assignment_{cut_k}.csv")), &hard)?;

    let (reference, ref_name) = match &truth_labels {
        Some(t) => (t.clone(), "truth"),
        None => (tree.cut(k)?, "hard_assignment"),
    };
    let mut perms = Vec::with_capacity(samples.z.len());
    let mut aris = Vec::with_capacity(samples.z.len());
    for z in &samples.z {
        perms.push(align_labels(z, &reference, k)?);
        aris.push(adjusted_rand_index(z, &reference)?);
    }
    let header = vec!["iteration".to_string(), format!("ari_vs_{ref_name}")];
    let rows = samples.iterations.iter().zip(&aris).map(|(it, a)| [it.to_string(), fmt_f64(*a)]);
    write_rows(&dir.join("ari.csv"), &header, rows)?;

    let freq = selection_frequency(&samples.gamma, &perms)?;
    let p = freq.ncols();
    let mut ranked = Vec::with_capacity(k * p);
    for c in 0..k {
        let mut cols: Vec<usize> = (0..p).collect();
        cols.sort_by(|&a, &b| freq[(c, b)].total_cmp(&freq[(c, a)]).then(a.cmp(&b)));
        ranked.extend(cols.into_iter().map(|d| [(c + 1).to_string(), format!("x{}", d + 1), fmt_f64(freq[(c, d)])]));
    }
    write_rows(
        &dir.join("selection_frequency.csv"),
        &["component", "variable", "frequency"].map(String::from),
        ranked,
    )?;
    let median_gamma = median_model(&freq);
    csvio::write_gamma(&dir.join("median_gamma.csv"), &median_gamma)?;

    let mut summary = vec![
        ("samples".to_string(), samples.z.len().to_string()),
        ("components".to_string(), k.to_string()),
        (format!("median_ari_vs_{ref_name}"), fmt_opt(median(aris))),
    ];
    if let Some(h) = &truth_labels {
        summary.push(("hard_assignment_ari".into(), fmt_f64(adjusted_rand_index(&hard, h)?)));
    }
    if let Some(truth) = &truth_gamma {
        if truth.len() != k || truth.iter().any(|row| row.len() != p) {
            return Err(CliError::Data(format!("truth_gamma.csv must be {k} x {p}")));
        }
        let mut sens = Vec::new();
        let mut spec = Vec::new();
        let mut rows = Vec::new();
        for ((gamma, perm), it) in samples.gamma.iter().zip(&perms).zip(&samples.iterations) {
            let mut aligned = vec![Vec::new(); k];
            for (c, row) in gamma.iter().enumerate() {
                aligned[perm[c]].clone_from(row);
            }
            let acc = gamma_accuracy(&aligned, truth)?;
            sens.extend(acc.sensitivity);
            spec.extend(acc.specificity);
            rows.push([it.to_string(), fmt_opt(acc.sensitivity), fmt_opt(acc.specificity)]);
        }
        write_rows(
            &dir.join("gamma_accuracy.csv"),
            &["iteration", "sensitivity", "specificity"].map(String::from),
            rows,
        )?;
        let med = gamma_accuracy(&median_gamma, truth)?;
        summary.push(("median_sensitivity".into(), fmt_opt(median(sens))));
        summary.push(("median_specificity".into(), fmt_opt(median(spec))));
        summary.push(("median_model_sensitivity".into(), fmt_opt(med.sensitivity)));
        summary.push(("median_model_specificity".into(), fmt_opt(med.specificity)));
    }
    let text: String = summary.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    csvio::write_text(&dir.join("summary.txt"), &text)?;
    log::info!("diagnosed {} samples into {}", samples.z.len(), dir.display());
    Ok(())
}

/// Prices of one market file: a `price` column, optional `date` column.
fn parse_prices(bytes: &[u8], name: &str) -> Result<PriceSeries, CliError> {
    let t = csvio::parse_table(bytes, name)?;
    let col = t
        .header
        .iter()
        .position(|h| h == "price")
        .ok_or_else(|| CliError::Data(format!("{name}: no `price` column")))?;
    let prices = t
        .rows
        .iter()
        .enumerate()
        .map(|(r, row)| csvio::parse_f64(&row[col], name, r + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let series = PriceSeries::new(prices).map_err(|e| CliError::Data(format!("{name}: {e}")))?;
    match t.header.iter().position(|h| h == "date") {
        Some(dc) => series
            .with_dates(t.rows.iter().map(|r| r[dc].clone()).collect())
            .map_err(|e| CliError::Data(format!("{name}: {e}"))),
        None => Ok(series),
    }
}

pub fn features(mut cfg: Config) -> Result<(), CliError> {
    cfg.check_keys(&allowed(&[&[
        "out",
        "prices",
        "alpha_fast",
        "alpha_slow",
        "vol_decay",
        "warmup",
        "trading_days",
        "autoq_lags",
        "vrt_horizon",
        "ghe_q",
        "ghe_max_lag",
    ]]))?;
    let sp = StrategyParams::default();
    cfg.set_default("alpha_fast", sp.alpha_fast);
    cfg.set_default("alpha_slow", sp.alpha_slow);
    cfg.set_default("vol_decay", sp.vol_decay);
    cfg.set_default("warmup", sp.warmup);
    cfg.set_default("trading_days", sp.trading_days);
    let fs = FeatureSettings::default();
    cfg.set_default("autoq_lags", fs.autoq_lags);
    cfg.set_default("vrt_horizon", fs.vrt_horizon);
    cfg.set_default("ghe_q", fs.ghe_q);
    cfg.set_default("ghe_max_lag", fs.ghe_max_lag);
    let prices_dir = required_path(&cfg, "prices")?;
    let dir = output_dir(&mut cfg, "features")?;
    let strategy = StrategyParams {
        alpha_fast: cfg.get("alpha_fast")?,
        alpha_slow: cfg.get("alpha_slow")?,
        vol_decay: cfg.get("vol_decay")?,
        warmup: cfg.get("warmup")?,
        trading_days: cfg.get("trading_days")?,
    };
    strategy.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let settings = FeatureSettings {
        autoq_lags: cfg.get("autoq_lags")?,
        vrt_horizon: cfg.get("vrt_horizon")?,
        ghe_q: cfg.get("ghe_q")?,
        ghe_max_lag: cfg.get("ghe_max_lag")?,
    };

    let entries = std::fs::read_dir(&prices_dir).map_err(|e| CliError::Data(format!("{}: {e}", prices_dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Data(format!("no .csv files in {}", prices_dir.display())));
    }
    let mut raw = Vec::with_capacity(files.len());
    let mut manifest = RunManifest::new("features", &cfg);
    for path in &files {
        let market = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        let bytes = csvio::read_bytes(path)?;
        manifest.add_digest(&format!("prices.{market}"), &bytes);
        raw.push((market, bytes));
    }
    manifest.write(&dir)?;

    let mut malformed = Vec::new();
    let mut series = Vec::new();
    for (market, bytes) in &raw {
        match parse_prices(bytes, &format!("{market}.csv")) {
            Ok(s) => series.push((market.clone(), s)),
            Err(e) => malformed.push(e.to_string()),
        }
    }
    if !malformed.is_empty() {
        for m in &malformed {
            log::error!("malformed price file {m}");
        }
        return Err(CliError::Data(format!("{} malformed price file(s): {}", malformed.len(), malformed.join("; "))));
    }

    let mut feature_rows = Vec::new();
    let mut response_rows = Vec::new();
    let mut usable: Vec<(f64, [f64; 8])> = Vec::new();
    for (market, s) in &series {
        let feats = match compute_features_with(s.prices(), &settings) {
            Ok(f) => Some(f),
            Err(e) => {
                log::warn!("{market}: excluded, {e}");
                None
            }
        };
        let sharpe = match strategy_sharpe(s.prices(), &strategy) {
            Ok(v) if v.is_finite() => Some(v),
            Ok(_) | Err(_) => None,
        };
        let values = feats.map(|f| f.values());
        let complete = values.is_some_and(|v| v.iter().all(|x| x.is_some_and(f64::is_finite)));
        let included = complete && sharpe.is_some();
        if feats.is_some() && !included {
            log::warn!("{market}: excluded, degenerate features or undefined Sharpe ratio");
        }
        let cells = values.map_or_else(|| vec![String::new(); 8], |v| v.iter().map(|x| fmt_opt(*x)).collect());
        let flag = u8::from(!complete).to_string();
        feature_rows.push([market.clone(), flag].into_iter().chain(cells).collect::<Vec<_>>());
        response_rows.push([market.clone(), fmt_opt(sharpe), u8::from(included).to_string()]);
        if let (true, Some(v), Some(y)) = (included, values, sharpe) {
            usable.push((y, v.map(|x| x.unwrap_or_default())));
        }
    }
    let mut header = vec!["market".to_string(), "degenerate".to_string()];
    header.extend(FEATURE_NAMES.map(String::from));
    write_rows(&dir.join("features.csv"), &header, feature_rows)?;
    write_rows(&dir.join("response.csv"), &["market", "sharpe", "included"].map(String::from), response_rows)?;

    if usable.len() < 2 {
        return Err(CliError::Data(format!("{} usable market(s); at least two are needed", usable.len())));
    }
    let m = usable.len();
    let mut x = DMatrix::from_element(m, 9, 1.0);
    for (f, name) in FEATURE_NAMES.iter().enumerate() {
        let col: Vec<f64> = usable.iter().map(|u| u.1[f]).collect();
        let mean = col.iter().sum::<f64>() / m as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(CliError::Numerical(format!("feature `{name}` is constant across markets")));
        }
        for (i, v) in col.iter().enumerate() {
            x[(i, f + 1)] = (v - mean) / sd;
        }
    }
    let data = Dataset::new(usable.iter().map(|u| u.0).collect(), x)?;
    csvio::write_dataset(&dir.join("data.csv"), &data)?;
    log::info!("{m} of {} markets written to {}", series.len(), dir.display());
    Ok(())
}
