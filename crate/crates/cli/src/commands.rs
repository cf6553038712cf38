use std::path::Path;

use serde::Serialize;

use sagnac_core::analysis::{ChshMode, Expectation, VisibilityFit};
use sagnac_core::detection::{simulate_run, DetectorSpec, TdcSpec};
use sagnac_core::dispersion::{build_ruler, fit_dispersion, LengthScan, RulerCurve};
use sagnac_core::io::{
    read_length_scan_csv, read_ruler_csv, write_fringe_csv, write_histogram_csv, write_json,
    write_key_value_csv, write_length_scan_csv, write_reference_curve, write_ruler_csv,
    HistogramMeta,
};
use sagnac_core::performance::performance_report;
use sagnac_core::pipeline::{
    derive_seed, measurement_from_output, run_chsh, run_fringe_family, seeded_length_scan,
};
use sagnac_core::spectral::build_biphoton_spectrum;
use sagnac_core::state::{AnalysisSettings, DetectorPair};
use sagnac_core::Error;

use crate::config::LoadedConfig;
use crate::error::CliError;
use crate::output::{line_chart, sha256_hex, FileDigest, Format, OutputDir, Series};

pub struct Context {
    pub loaded: LoadedConfig,
    pub seed: u64,
    pub format: Format,
    pub svg: bool,
    pub out: OutputDir,
    pub inputs: Vec<FileDigest>,
}

impl Context {
    fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }

    fn table<T: Serialize>(
        &mut self,
        stem: &str,
        value: &T,
        csv: impl FnOnce(&mut std::io::BufWriter<std::fs::File>, &T) -> sagnac_core::Result<()>,
    ) -> Result<(), CliError> {
        let rel = format!("{stem}.{}", self.format.extension());
        match self.format {
            Format::Csv => self.out.write(&rel, |w| csv(w, value)),
            Format::Json => self.out.write(&rel, |w| write_json(w, value)),
        }
    }

    fn json<T: Serialize + ?Sized>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        self.out.write(rel, |w| write_json(w, value))
    }
}

#[derive(Serialize)]
struct HistogramSidecar {
    histogram: HistogramMeta,
    settings: AnalysisSettings,
    rng_seed: u64,
    tdc: TdcSpec,
    signal_detector: DetectorSpec,
    idler_detector: DetectorSpec,
}

#[derive(Serialize)]
struct SettingSummary {
    settings: AnalysisSettings,
    rng_seed: u64,
    singles: [u64; 4],
    windowed_counts: Option<[u64; 4]>,
    raw: Option<Expectation>,
    net: Option<Expectation>,
}

pub fn simulate(ctx: &mut Context) -> Result<(), CliError> {
    let config = ctx.loaded.config.clone();
    let setup = config.setup();
    let mut summary = Vec::new();
    for (k, [phi_s, phi_i]) in config.simulate.settings.iter().enumerate() {
        let settings = AnalysisSettings::new(*phi_s, *phi_i);
        let seed = derive_seed(ctx.seed, k as u64);
        let output = simulate_run(&setup.run(settings, seed)?)?;
        for h in &output.histograms {
            let stem = format!("setting_{k}/histogram_{}", h.detector_pair.label());
            ctx.table(&stem, h, |w, h| write_histogram_csv(w, h))?;
            let sidecar = HistogramSidecar {
                histogram: HistogramMeta::of(h),
                settings,
                rng_seed: seed,
                tdc: setup.tdc,
                signal_detector: config.detectors.signal,
                idler_detector: config.detectors.idler,
            };
            ctx.json(&format!("{stem}.meta.json"), &sidecar)?;
        }
        let measurement = match measurement_from_output(&setup, settings, &output) {
            Ok(m) => Some(m),
            Err(Error::NoCoincidences) => None,
            Err(e) => return Err(e.into()),
        };
        let windowed = measurement.as_ref().map(|m| m.raw_counts);
        let (raw, net) = measurement.map_or((None, None), |m| (Some(m.raw), Some(m.net)));
        println!(
            "setting {k} (phi_s = {phi_s}, phi_i = {phi_i}): windowed counts {}",
            windowed.map_or("none".into(), |c| format!("{c:?} (VV, HH, VH, HV)"))
        );
        summary.push(SettingSummary {
            settings,
            rng_seed: seed,
            singles: output.singles,
            windowed_counts: windowed,
            raw,
            net,
        });
    }
    ctx.json("summary.json", &summary)
}

#[derive(Serialize)]
struct FitRecord {
    phi_s: f64,
    detector_pair: DetectorPair,
    #[serde(flatten)]
    fit: VisibilityFit,
}

pub fn fringes(ctx: &mut Context) -> Result<(), CliError> {
    let config = ctx.loaded.config.clone();
    let setup = config.setup();
    let mut records = Vec::new();
    for (k, phi_s) in config.fringes.signal_phases.iter().enumerate() {
        let family = run_fringe_family(&setup, *phi_s, config.fringes.points, derive_seed(ctx.seed, 1000 + k as u64))?;
        for (scan, fit) in family.scans.iter().zip(&family.fits) {
            let label = scan.detector_pair.label();
            ctx.table(&format!("fringes/family_{k}_{label}"), scan, |w, s| write_fringe_csv(w, s))?;
            println!(
                "phi_s = {phi_s:.4} {label}: V = {:.4} ± {:.4}, phi0 = {:.4}{}",
                fit.visibility,
                fit.visibility_sigma,
                fit.phase_offset,
                if fit.clipped { " (clipped)" } else { "" }
            );
            records.push(FitRecord { phi_s: *phi_s, detector_pair: scan.detector_pair, fit: *fit });
        }
        if ctx.svg {
            let series: Vec<Series> = family
                .scans
                .iter()
                .map(|s| Series {
                    label: s.detector_pair.label(),
                    points: s.phase_points.iter().zip(&s.counts).map(|(p, c)| (*p, *c as f64)).collect(),
                })
                .collect();
            let svg = line_chart(&format!("fringes, phi_s = {phi_s:.4}"), "phi_i (rad)", "coincidences", &series);
            ctx.out.write_text(&format!("fringes/family_{k}.svg"), &svg)?;
        }
    }
    ctx.json("fringe_fits.json", &records)
}

pub fn chsh(ctx: &mut Context) -> Result<(), CliError> {
    let setup = ctx.loaded.config.setup();
    let result = run_chsh(&setup, ctx.seed)?;
    for r in [&result.raw, &result.net] {
        println!(
            "S_{} = {:.4} ± {:.4} ({:.1} sigma above 2)",
            match r.mode {
                ChshMode::Raw => "raw",
                ChshMode::Net => "net",
            },
            r.s,
            r.s_sigma,
            r.violation_sigmas()
        );
    }
    ctx.json("chsh.json", &result)
}

fn analytic_ruler(ctx: &Context) -> Result<(RulerCurve, Vec<(f64, f64)>), CliError> {
    let d = &ctx.loaded.config.dispersion;
    let spectrum = build_biphoton_spectrum(&d.signal_filter, &d.idler_filter, d.pump_wavelength_nm, d.grid_points)?;
    let ruler = build_ruler(&spectrum, d.ruler_max_delay_ps, d.ruler_samples, d.zero_delay_visibility)?;
    let reference = ruler.delays().iter().map(|t| (*t, spectrum.coherence(*t))).collect();
    Ok((ruler, reference))
}

fn ruler_chart(ctx: &mut Context, ruler: &RulerCurve) -> Result<(), CliError> {
    if ctx.svg {
        let points = ruler.delays().iter().copied().zip(ruler.visibilities().iter().copied()).collect();
        let svg = line_chart("visibility ruler", "delay (ps)", "visibility", &[Series { label: "ruler", points }]);
        ctx.out.write_text("ruler.svg", &svg)?;
    }
    Ok(())
}

pub fn ruler(ctx: &mut Context) -> Result<(), CliError> {
    let (ruler, reference) = analytic_ruler(ctx)?;
    ctx.table("ruler", &ruler, |w, r| write_ruler_csv(w, r))?;
    ctx.table("reference_curve", &reference, |w, c| write_reference_curve(w, c))?;
    ruler_chart(ctx, &ruler)?;
    let half = ruler.visibilities().iter().position(|v| *v <= 0.5 * ruler.visibilities()[0]);
    match half {
        Some(k) => println!("ruler: {} samples, half visibility near {:.3} ps", ruler.len(), ruler.delays()[k]),
        None => println!("ruler: {} samples, stays above half visibility", ruler.len()),
    }
    Ok(())
}

pub fn dispersion_fit(ctx: &mut Context) -> Result<(), CliError> {
    let d = ctx.loaded.config.dispersion.clone();
    let ruler = match &d.ruler_csv {
        Some(p) => {
            let path = ctx.loaded.resolve(p);
            let bytes = ctx.read_input(&path)?;
            read_ruler_csv(&bytes[..])?
        }
        None => analytic_ruler(ctx)?.0,
    };
    let scan: LengthScan = match &d.scan_csv {
        Some(p) => {
            let path = ctx.loaded.resolve(p);
            let bytes = ctx.read_input(&path)?;
            read_length_scan_csv(&bytes[..])?
        }
        None => seeded_length_scan(&ruler, d.r_true, &d.lengths_m, d.noise_sigma, ctx.seed)?,
    };
    let fit = fit_dispersion(&scan, &ruler, d.delta_lambda_nm)?;
    ctx.table("length_scan", &scan, |w, s| write_length_scan_csv(w, s))?;
    ctx.json("dispersion_fit.json", &fit)?;
    ruler_chart(ctx, &ruler)?;
    println!(
        "R = {:.4} ± {:.4} ps/m, D = {:.3} ± {:.3} ps/(nm km)",
        fit.r, fit.r_sigma, fit.d, fit.d_sigma
    );
    Ok(())
}

pub fn performance(ctx: &mut Context) -> Result<(), CliError> {
    let p = ctx.loaded.config.performance.clone();
    let report = performance_report(&p.budget, p.pump_power_mw, p.coherence_k)?;
    let rows = [
        ("spectral_brightness", report.spectral_brightness),
        ("pump_power_mw", report.pump_power_mw),
        ("coherence_k", report.coherence_k),
        ("pairs_per_coherence_time", report.pairs_per_coherence_time),
        ("total_pair_rate", report.total_pair_rate),
        ("heralding_efficiency", report.heralding_efficiency),
    ];
    for (k, v) in rows {
        println!("{k} = {v:.6e}");
    }
    ctx.table("performance", &report, |w, _| write_key_value_csv(w, &rows))
}
