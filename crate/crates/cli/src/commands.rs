use cutoff_lab_core::acceptance::{default_ids, run_suite, Scale, Tolerances};
use cutoff_lab_core::dynamics::sample_update_sequence;
use cutoff_lab_core::estimators::{
    central_box, gap_from_xi, mixing_profile, xi_t_curve, MixingOptions, XiCurve,
};
use cutoff_lab_core::io::{fmt_f64, render_pgm, CsvTable};
use cutoff_lab_core::lattice::{Region, TorusGeometry};
use cutoff_lab_core::model::monotone_order;
use cutoff_lab_core::oracle::{build_generator, log_sobolev_upper_estimate, m_t_from_spectrum, spectral_gap_exact};
use cutoff_lab_core::rng::split_seed;
use cutoff_lab_core::support::{
    build_block_partition, classify_sparse, exact_support, support_map, support_superset_blocks,
    support_superset_paths, SupportDefaults, SupportMethod, SupportSet,
};

use crate::artifacts::Artifacts;
use crate::config::RunConfig;
use crate::CliError;

fn model_meta(t: &mut CsvTable, cfg: &RunConfig) {
    t.meta("family", cfg.model.family.name())
        .meta("beta", cfg.model.beta)
        .meta("h", cfg.model.h)
        .meta("rate_rule", cfg.model.rate_rule.name())
        .meta("dimension", cfg.d)
        .meta("seed", cfg.seed);
}

fn csv(t: &CsvTable) -> Vec<u8> {
    t.render().into_bytes()
}

pub fn oracle(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let g = TorusGeometry::new(cfg.d, &cfg.axis_sides()?)?;
    let l = build_generator(&cfg.model, &g)?;
    let (gap, spec) = spectral_gap_exact(&l)?;
    let mut report = CsvTable::new(&["quantity", "value"]);
    model_meta(&mut report, cfg);
    report.meta("sides", format!("{:?}", g.sides()));
    let mut row = |k: &str, v: String| report.rows.push(vec![k.to_string(), v]);
    row("gap", fmt_f64(gap));
    row("n_states", spec.n_states().to_string());
    row("n_sites", g.n_sites().to_string());
    row("stationarity_residual", fmt_f64(l.stationarity_residual()));
    row("reversibility_residual", fmt_f64(l.reversibility_residual()));
    let ev = spec.eigenvalues();
    row("largest_eigenvalue", fmt_f64(*ev.last().unwrap()));
    if cfg.method.log_sobolev {
        let ls = log_sobolev_upper_estimate(&l, cfg.method.restarts, cfg.seed)?;
        row("alpha_hat", fmt_f64(ls.alpha_hat));
        row("best_ratio", fmt_f64(ls.best_ratio));
        row("gap_limit_used", ls.gap_limit_used.to_string());
    }
    out.add("report.csv", csv(&report));
    out.add("spectrum.csv", csv(&spec.to_csv()));
    if let Some(times) = &cfg.method.times {
        let b = central_box(&g);
        let mut t = CsvTable::new(&["t", "m_t"]);
        model_meta(&mut t, cfg);
        t.meta("box_sites", format!("{:?}", b.sites()));
        for &time in times {
            t.rows.push(vec![fmt_f64(time), fmt_f64(m_t_from_spectrum(&spec, &b, time)?)]);
        }
        out.add("m_t.csv", csv(&t));
    }
    println!("gap = {}", fmt_f64(gap));
    Ok(())
}

fn mask_pgm(g: &TorusGeometry, region: &Region) -> Result<Option<String>, CliError> {
    if g.dimension() > 2 {
        return Ok(None);
    }
    let width = g.sides()[0];
    let height = if g.dimension() == 2 { g.sides()[1] } else { 1 };
    let mut pixels = vec![0u16; width * height];
    for &s in region.sites() {
        let y = if g.dimension() == 2 { g.coord(s, 1) } else { 0 };
        pixels[y * width + g.coord(s, 0)] = 1;
    }
    Ok(Some(render_pgm(width, height, 1, &pixels)?))
}

pub fn support(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let g = TorusGeometry::new(cfg.d, &cfg.axis_sides()?)?;
    let defaults = SupportDefaults::for_side(g.sides()[0], cfg.d);
    let mc = &cfg.method;
    let b = mc.b.unwrap_or(defaults.block_side);
    let w = mc.w.unwrap_or(defaults.halo);
    let (dcap, sep, lcap) = (
        mc.diameter_cap.unwrap_or(defaults.diameter_cap),
        mc.separation.unwrap_or(defaults.separation),
        mc.component_cap.unwrap_or(defaults.component_cap),
    );
    let times = mc.times.clone().unwrap_or_else(|| vec![1.0, 2.0, 4.0, 8.0]);
    let seeds: Vec<u64> = (0..mc.maps.max(1)).map(|k| split_seed(cfg.seed, k as u64)).collect();
    let mut sparsity = CsvTable::new(&[
        "method", "map", "t", "size", "fraction", "components", "max_diameter", "min_separation", "verdict",
    ]);
    model_meta(&mut sparsity, cfg);
    sparsity
        .meta("sides", format!("{:?}", g.sides()))
        .meta("b", b)
        .meta("w", w)
        .meta("D", dcap)
        .meta("S", sep)
        .meta("L", lcap);
    let n = g.n_sites() as f64;
    let mut record = |method: SupportMethod, k: usize, t: f64, set: &SupportSet| -> Result<(), CliError> {
        let rep = classify_sparse(&g, set, dcap, sep, lcap)?;
        sparsity.rows.push(vec![
            method.name().to_string(),
            k.to_string(),
            fmt_f64(t),
            set.region.len().to_string(),
            fmt_f64(set.region.len() as f64 / n),
            rep.components.len().to_string(),
            rep.components.iter().map(|c| c.diameter).max().unwrap_or(0).to_string(),
            rep.min_separation.map_or(String::new(), |s| s.to_string()),
            rep.verdict().to_string(),
        ]);
        Ok(())
    };
    match mc.support_method.as_str() {
        "blocks" => {
            let p = build_block_partition(&g, b, w)?;
            let maps = support_map(&cfg.model, &p, &seeds, &times)?;
            for (k, map) in maps.iter().enumerate() {
                for (i, &t) in times.iter().enumerate() {
                    let set = SupportSet {
                        region: map.support_at(i),
                        method: SupportMethod::BlockCertificate,
                        seed: map.seed,
                        t_end: t,
                    };
                    record(SupportMethod::BlockCertificate, k, t, &set)?;
                    if let Some(pgm) = mask_pgm(&g, &set.region)? {
                        out.add(format!("support_m{k}_t{i}.pgm"), pgm);
                    }
                }
                if cfg.d <= 2 {
                    out.add(format!("last_support_m{k}.pgm"), map.to_pgm()?);
                }
                out.add(format!("last_support_m{k}.csv"), csv(&map.to_csv()?));
            }
        }
        method => {
            let exact = method == "exact";
            let partition = build_block_partition(&g, b, w).ok();
            let monotone = monotone_order(&cfg.model, &g).is_ok();
            let mut soundness = CsvTable::new(&[
                "map", "t", "exact_size", "blocks_size", "paths_size", "exact_in_blocks", "exact_in_paths",
            ]);
            model_meta(&mut soundness, cfg);
            let horizon = *times.last().unwrap();
            for (k, &s) in seeds.iter().enumerate() {
                let full = sample_update_sequence(&g, horizon, s)?;
                for (i, &t) in times.iter().enumerate() {
                    let seq = full.prefix(t);
                    let paths = support_superset_paths(&g, &seq, cfg.model.rate_rule)?;
                    let chosen = if exact {
                        let ex = exact_support(&cfg.model, &g, &seq)?;
                        let blocks = match (&partition, monotone) {
                            (Some(p), true) => Some(support_superset_blocks(&cfg.model, p, &seq)?),
                            _ => None,
                        };
                        soundness.rows.push(vec![
                            k.to_string(),
                            fmt_f64(t),
                            ex.region.len().to_string(),
                            blocks.as_ref().map_or(String::new(), |b| b.region.len().to_string()),
                            paths.region.len().to_string(),
                            blocks.as_ref().map_or(String::new(), |b| ex.region.is_subset_of(&b.region).to_string()),
                            ex.region.is_subset_of(&paths.region).to_string(),
                        ]);
                        ex
                    } else {
                        paths
                    };
                    record(chosen.method, k, t, &chosen)?;
                    if let Some(pgm) = mask_pgm(&g, &chosen.region)? {
                        out.add(format!("support_m{k}_t{i}.pgm"), pgm);
                    }
                }
            }
            if exact {
                out.add("soundness.csv", csv(&soundness));
            }
        }
    }
    out.add("sparsity.csv", csv(&sparsity));
    Ok(())
}

pub fn mixing(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let opts = MixingOptions {
        replicas: cfg.method.replicas,
        t_step: cfg.method.t_step,
        t_max: cfg.method.t_max,
        statistic: cfg.method.statistic,
        lambda: cfg.method.lambda,
    };
    let prof = mixing_profile(&cfg.model, cfg.d, &cfg.sides, &cfg.method.eps, &opts, cfg.seed)?;
    for c in &prof.curves {
        out.add(format!("curve_n{}.csv", c.side), csv(&c.to_csv(&cfg.model)));
        out.add(format!("curve_n{}.svg", c.side), c.to_svg());
    }
    let mut table = prof.table_csv();
    model_meta(&mut table, cfg);
    table.meta("replicas", cfg.method.replicas);
    out.add("mixing_table.csv", csv(&table));
    let mut diag = prof.diagnostics_csv();
    model_meta(&mut diag, cfg);
    out.add("cutoff_diagnostics.csv", csv(&diag));
    for r in prof.rows.iter().filter(|r| r.bracket_failed()) {
        eprintln!("warning: bracket failed for n = {}, eps = {}", r.side, r.eps);
    }
    Ok(())
}

pub fn gap(cfg: &RunConfig, out: &mut Artifacts) -> Result<(), CliError> {
    let times = cfg.method.times.clone().unwrap_or_else(|| (0..=60).map(|k| 0.5 * k as f64).collect());
    let mut table = CsvTable::new(&[
        "r", "lambda_hat", "se", "window_lo", "window_hi", "residual", "points", "wraparound_risk", "status",
    ]);
    model_meta(&mut table, cfg);
    table.meta("replicas", cfg.method.replicas).meta("synthetic", cfg.method.synthetic);
    let mut fitted = 0;
    for (i, &r) in cfg.sides.iter().enumerate() {
        let curve = if cfg.method.synthetic {
            let rate = cfg.method.synthetic_rate;
            XiCurve { side: r, ..XiCurve::synthetic(&times, |t| (-rate * t).exp()) }
        } else {
            let g = TorusGeometry::cube(cfg.d, r)?;
            xi_t_curve(&cfg.model, &g, &times, cfg.method.replicas, split_seed(cfg.seed, i as u64))?
        };
        if curve.wraparound_risk {
            eprintln!("warning: side {r} may let disagreements wrap around within t = {}", times.last().unwrap());
        }
        let mut xi = curve.to_csv();
        model_meta(&mut xi, cfg);
        out.add(format!("xi_r{r}.csv"), csv(&xi));
        out.add(format!("xi_r{r}.svg"), curve.to_svg());
        match gap_from_xi(&curve, cfg.method.window) {
            Ok(est) => {
                fitted += 1;
                table.rows.push(vec![
                    r.to_string(),
                    fmt_f64(est.lambda_hat),
                    fmt_f64(est.se),
                    fmt_f64(est.window.0),
                    fmt_f64(est.window.1),
                    fmt_f64(est.residual),
                    est.points.to_string(),
                    curve.wraparound_risk.to_string(),
                    "ok".into(),
                ]);
            }
            Err(e) => {
                eprintln!("warning: fit refused for r = {r}: {e}");
                let mut row = vec![r.to_string()];
                row.extend(std::iter::repeat_n(String::new(), 6));
                row.push(curve.wraparound_risk.to_string());
                row.push(format!("refused: {e}").replace(',', ";"));
                table.rows.push(row);
            }
        }
    }
    out.add("gap_estimates.csv", csv(&table));
    if fitted == 0 {
        return Err(CliError::Numerical("no side produced a usable fit".into()));
    }
    Ok(())
}

pub fn verify(cfg: &RunConfig, quick: bool, out: &mut Artifacts) -> Result<(), CliError> {
    let scale = if quick || cfg.verify.quick { Scale::Quick } else { Scale::Full };
    let ids = if cfg.verify.criteria.is_empty() { default_ids(scale) } else { cfg.verify.criteria.clone() };
    let tol = Tolerances::default().scaled(cfg.verify.tolerance_scale);
    let results = run_suite(&ids, scale, &tol, cfg.verify.seed);
    let mut table = CsvTable::new(&["id", "name", "passed", "detail"]);
    table
        .meta("scale", format!("{scale:?}").to_lowercase())
        .meta("tolerance_scale", cfg.verify.tolerance_scale)
        .meta("seed", cfg.verify.seed);
    let mut failed = 0;
    for r in &results {
        println!("{r}");
        if !r.passed {
            failed += 1;
        }
        table.rows.push(vec![
            r.id.to_string(),
            r.name.to_string(),
            r.passed.to_string(),
            format!("\"{}\"", r.detail.replace('"', "'")),
        ]);
    }
    out.add("verify.csv", csv(&table));
    if failed > 0 {
        return Err(CliError::Acceptance(format!("{failed} of {} criteria failed", results.len())));
    }
    Ok(())
}
