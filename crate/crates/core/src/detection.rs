//! Monte Carlo generation of time-tagged detection events and two-detector
//! coincidence histograms.
//!
//! Pairs are emitted as a Poisson process. Each pair picks a detector
//! combination from the diagonal-basis probabilities, each photon survives
//! with its detector efficiency and is smeared by Gaussian jitter. Dark
//! counts are independent Poisson processes. Non-paralysable deadtime is
//! applied per detector to the merged stream, then every signal event is
//! correlated against idler events inside the histogram range.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::FWHM_PER_SIGMA;
use crate::error::{Error, Result};
use crate::state::{
    apply_phase_modulators, coincidence_probabilities, AnalysisSettings, Detector, DetectorPair,
    TwoPhotonState,
};

/// Documented default timing jitter (FWHM) when none is specified, ps.
pub const DEFAULT_JITTER_FWHM_PS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub efficiency: f64,
    /// counts/s
    pub dark_count_rate: f64,
    /// µs
    pub deadtime_us: f64,
    /// ps
    #[serde(default = "default_jitter")]
    pub timing_jitter_fwhm_ps: f64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER_FWHM_PS
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_rate: 0.0,
            deadtime_us: 0.0,
            timing_jitter_fwhm_ps: 0.0,
        }
    }

    /// Free-running InGaAs detector at Alice (IDQ 220 class).
    pub fn free_running_ingaas() -> Self {
        Self {
            efficiency: 0.15,
            dark_count_rate: 15.0,
            deadtime_us: 20.0,
            timing_jitter_fwhm_ps: DEFAULT_JITTER_FWHM_PS,
        }
    }

    /// Gated InGaAs detector at Bob (IDQ 201 class), gating folded into the
    /// efficiency.
    pub fn gated_ingaas() -> Self {
        Self {
            efficiency: 0.20,
            dark_count_rate: 15.0,
            deadtime_us: 40.0,
            timing_jitter_fwhm_ps: DEFAULT_JITTER_FWHM_PS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::domain(format!(
                "detector efficiency must lie in [0, 1], got {}",
                self.efficiency
            )));
        }
        for (name, v) in [
            ("dark_count_rate", self.dark_count_rate),
            ("deadtime_us", self.deadtime_us),
            ("timing_jitter_fwhm_ps", self.timing_jitter_fwhm_ps),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::domain(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }

    fn jitter_sigma_ps(&self) -> f64 {
        self.timing_jitter_fwhm_ps / FWHM_PER_SIGMA
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdcSpec {
    pub bin_width_ps: f64,
    pub coincidence_window_bins: usize,
    /// Number of histogram bins, centred on zero delay.
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
}

fn default_histogram_bins() -> usize {
    64
}

impl Default for TdcSpec {
    fn default() -> Self {
        Self {
            bin_width_ps: 81.0,
            coincidence_window_bins: 4,
            histogram_bins: default_histogram_bins(),
        }
    }
}

impl TdcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bin_width_ps.is_finite() && self.bin_width_ps > 0.0) {
            return Err(Error::domain(format!(
                "bin width must be positive, got {}",
                self.bin_width_ps
            )));
        }
        if self.coincidence_window_bins == 0 {
            return Err(Error::domain("coincidence window must span at least one bin"));
        }
        if self.histogram_bins < self.coincidence_window_bins || self.histogram_bins % 2 != 0 {
            return Err(Error::domain(format!(
                "histogram_bins must be even and at least the window, got {}",
                self.histogram_bins
            )));
        }
        Ok(())
    }

    pub fn window_ps(&self) -> f64 {
        self.bin_width_ps * self.coincidence_window_bins as f64
    }

    /// Lower edge of the first bin, ps.
    pub fn range_start_ps(&self) -> f64 {
        -(self.histogram_bins as f64 / 2.0) * self.bin_width_ps
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let lo = self.range_start_ps();
        (0..=self.histogram_bins)
            .map(|k| lo + k as f64 * self.bin_width_ps)
            .collect()
    }
}

/// Coincidence counts versus idler-minus-signal arrival delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub detector_pair: DetectorPair,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub acquisition_time_s: f64,
}

impl CoincidenceHistogram {
    pub fn new(
        detector_pair: DetectorPair,
        bin_edges: Vec<f64>,
        counts: Vec<u64>,
        acquisition_time_s: f64,
    ) -> Result<Self> {
        if bin_edges.len() != counts.len() + 1 || counts.is_empty() {
            return Err(Error::InvalidData(format!(
                "histogram needs bins + 1 edges, got {} edges for {} bins",
                bin_edges.len(),
                counts.len()
            )));
        }
        if !(acquisition_time_s > 0.0) {
            return Err(Error::InvalidData("acquisition time must be positive".into()));
        }
        Ok(Self {
            detector_pair,
            bin_edges,
            counts,
            acquisition_time_s,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Everything needed to reproduce one acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub state: TwoPhotonState,
    /// pairs/s
    pub pair_rate: f64,
    /// Indexed by [`Detector::index`].
    pub detectors: [DetectorSpec; 4],
    pub tdc: TdcSpec,
    pub settings: AnalysisSettings,
    pub acquisition_time_s: f64,
    pub rng_seed: u64,
    /// Number of independently seeded time slices.
    pub shards: u32,
}

impl ExperimentRun {
    pub fn validate(&self) -> Result<()> {
        if !(self.pair_rate.is_finite() && self.pair_rate >= 0.0) {
            return Err(Error::domain(format!(
                "pair rate must be non-negative, got {}",
                self.pair_rate
            )));
        }
        if !(self.acquisition_time_s.is_finite() && self.acquisition_time_s > 0.0) {
            return Err(Error::domain(format!(
                "acquisition time must be positive, got {}",
                self.acquisition_time_s
            )));
        }
        if self.shards == 0 {
            return Err(Error::domain("shards must be at least 1"));
        }
        for d in &self.detectors {
            d.validate()?;
        }
        self.tdc.validate()
    }

    pub fn detector(&self, d: Detector) -> &DetectorSpec {
        &self.detectors[d.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    /// Ordered as [`DetectorPair::ALL`].
    pub histograms: Vec<CoincidenceHistogram>,
    /// Detected events per detector after deadtime, indexed by
    /// [`Detector::index`].
    pub singles: [u64; 4],
    pub acquisition_time_s: f64,
}

impl RunOutput {
    pub fn histogram(&self, pair: DetectorPair) -> &CoincidenceHistogram {
        &self.histograms[pair.index()]
    }

    pub fn singles_rate(&self, d: Detector) -> f64 {
        self.singles[d.index()] as f64 / self.acquisition_time_s
    }
}

/// RNG for one shard: the run seed selects the key, the shard index the
/// ChaCha stream.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

type EventLists = [Vec<f64>; 4];

fn simulate_shard(run: &ExperimentRun, cdf: &[f64; 4], shard: u32) -> Result<EventLists> {
    let width = run.acquisition_time_s / run.shards as f64;
    let start = shard as f64 * width;
    let end = if shard + 1 == run.shards {
        run.acquisition_time_s
    } else {
        start + width
    };
    let mut rng = shard_rng(run.rng_seed, shard as u64);
    let mut events: EventLists = Default::default();

    let jitter: Vec<Option<Normal<f64>>> = run
        .detectors
        .iter()
        .map(|d| {
            let sigma = d.jitter_sigma_ps();
            (sigma > 0.0)
                .then(|| Normal::new(0.0, sigma).map_err(|e| Error::domain(e.to_string())))
                .transpose()
        })
        .collect::<Result<_>>()?;

    if run.pair_rate > 0.0 {
        let gaps = Exp::new(run.pair_rate).map_err(|e| Error::domain(e.to_string()))?;
        let mut t = start;
        loop {
            t += gaps.sample(&mut rng);
            if t >= end {
                break;
            }
            let u: f64 = rng.random();
            let pair = DetectorPair::ALL[cdf.iter().position(|c| u < *c).unwrap_or(3)];
            let t_ps = t * 1e12;
            for det in [pair.signal(), pair.idler()] {
                let spec = run.detector(det);
                let keep: f64 = rng.random();
                if keep < spec.efficiency {
                    let smear = match &jitter[det.index()] {
                        Some(n) => n.sample(&mut rng),
                        None => 0.0,
                    };
                    events[det.index()].push(t_ps + smear);
                }
            }
        }
    }

    for det in Detector::ALL {
        let rate = run.detector(det).dark_count_rate;
        if rate <= 0.0 {
            continue;
        }
        let gaps = Exp::new(rate).map_err(|e| Error::domain(e.to_string()))?;
        let mut t = start;
        loop {
            t += gaps.sample(&mut rng);
            if t >= end {
                break;
            }
            events[det.index()].push(t * 1e12);
        }
    }
    Ok(events)
}

/// Removes events closer than `deadtime_ps` to the previously accepted one
/// (non-paralysable). `times` must be sorted.
pub fn apply_deadtime(times: &[f64], deadtime_ps: f64) -> Vec<f64> {
    if deadtime_ps <= 0.0 {
        return times.to_vec();
    }
    let mut out = Vec::with_capacity(times.len());
    let mut ready = f64::NEG_INFINITY;
    for &t in times {
        if t >= ready {
            out.push(t);
            ready = t + deadtime_ps;
        }
    }
    out
}

/// Histograms `idler − signal` delays of two sorted event lists.
pub fn correlate(signal: &[f64], idler: &[f64], tdc: &TdcSpec) -> Vec<u64> {
    let bins = tdc.histogram_bins;
    let lo = tdc.range_start_ps();
    let hi = -lo;
    let mut counts = vec![0u64; bins];
    let mut first = 0usize;
    for &ts in signal {
        while first < idler.len() && idler[first] - ts < lo {
            first += 1;
        }
        let mut k = first;
        while k < idler.len() {
            let dt = idler[k] - ts;
            if dt >= hi {
                break;
            }
            let bin = (((dt - lo) / tdc.bin_width_ps).floor() as usize).min(bins - 1);
            counts[bin] += 1;
            k += 1;
        }
    }
    counts
}

/// Runs one acquisition. Deterministic for a fixed run description,
/// independent of the number of worker threads.
pub fn simulate_run(run: &ExperimentRun) -> Result<RunOutput> {
    run.validate()?;
    let probs = coincidence_probabilities(&apply_phase_modulators(&run.state, &run.settings));
    let mut cdf = [0.0; 4];
    let mut acc = 0.0;
    for (c, p) in cdf.iter_mut().zip(probs.as_array()) {
        acc += p;
        *c = acc;
    }

    let shards: Vec<EventLists> = (0..run.shards)
        .into_par_iter()
        .map(|k| simulate_shard(run, &cdf, k))
        .collect::<Result<_>>()?;

    let streams: Vec<Vec<f64>> = Detector::ALL
        .par_iter()
        .map(|det| {
            let i = det.index();
            let mut all: Vec<f64> = shards.iter().flat_map(|s| s[i].iter().copied()).collect();
            all.sort_unstable_by(f64::total_cmp);
            apply_deadtime(&all, run.detector(*det).deadtime_us * 1e6)
        })
        .collect();

    let edges = run.tdc.bin_edges();
    let histograms = DetectorPair::ALL
        .par_iter()
        .map(|pair| {
            let counts = correlate(
                &streams[pair.signal().index()],
                &streams[pair.idler().index()],
                &run.tdc,
            );
            CoincidenceHistogram::new(*pair, edges.clone(), counts, run.acquisition_time_s)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut singles = [0u64; 4];
    for (s, stream) in singles.iter_mut().zip(&streams) {
        *s = stream.len() as u64;
    }
    Ok(RunOutput {
        histograms,
        singles,
        acquisition_time_s: run.acquisition_time_s,
    })
}

/// Windowed coincidence count around a histogram peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowedCount {
    pub count: u64,
    pub peak_bin: usize,
    /// First bin of the window.
    pub window_start: usize,
    /// One past the last bin of the window.
    pub window_end: usize,
}

/// Sums `coincidence_window_bins` bins centred on the highest bin (ties go
/// to the lowest index). An even window leans towards the larger of the two
/// neighbouring bins, towards lower bins on ties.
pub fn extract_coincidences(histogram: &CoincidenceHistogram, tdc: &TdcSpec) -> Result<WindowedCount> {
    let counts = &histogram.counts;
    if counts.is_empty() || counts.iter().all(|c| *c == 0) {
        return Err(Error::NoPeak);
    }
    let mut peak = 0;
    for (k, c) in counts.iter().enumerate() {
        if *c > counts[peak] {
            peak = k;
        }
    }
    let n = counts.len();
    let w = tdc.coincidence_window_bins.min(n);
    let half = (w / 2) as isize;
    let mut start = peak as isize - half;
    if w % 2 == 0 {
        let left = peak.checked_sub(1).map_or(0, |k| counts[k]);
        let right = counts.get(peak + 1).copied().unwrap_or(0);
        if right > left {
            start += 1;
        }
    }
    let start = start.clamp(0, (n - w) as isize) as usize;
    Ok(WindowedCount {
        count: counts[start..start + w].iter().sum(),
        peak_bin: peak,
        window_start: start,
        window_end: start + w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ideal_run(state: TwoPhotonState, rate: f64, time: f64, seed: u64) -> ExperimentRun {
        ExperimentRun {
            state,
            pair_rate: rate,
            detectors: [DetectorSpec::ideal(); 4],
            tdc: TdcSpec::default(),
            settings: AnalysisSettings::default(),
            acquisition_time_s: time,
            rng_seed: seed,
            shards: 4,
        }
    }

    fn hist(counts: Vec<u64>) -> CoincidenceHistogram {
        let edges = (0..=counts.len()).map(|k| k as f64 * 81.0).collect();
        CoincidenceHistogram::new(DetectorPair::VV, edges, counts, 1.0).unwrap()
    }

    #[test]
    fn empty_process_gives_empty_histograms() {
        let run = ideal_run(TwoPhotonState::phi_plus(1.0).unwrap(), 0.0, 10.0, 3);
        let out = simulate_run(&run).unwrap();
        assert!(out.histograms.iter().all(|h| h.total() == 0));
        assert_eq!(out.singles, [0; 4]);
    }

    #[test]
    fn perfect_correlation_with_ideal_detectors() {
        let run = ideal_run(TwoPhotonState::phi_plus(1.0).unwrap(), 1e3, 100.0, 11);
        let out = simulate_run(&run).unwrap();
        let n: Vec<u64> = out.histograms.iter().map(|h| h.total()).collect();
        let total = out.singles[0] + out.singles[1];
        // multinomial(½, ½, 0, 0): same-polarisation split is binomial
        let sigma = (0.25 * total as f64).sqrt();
        assert!((n[0] as f64 - 0.5 * total as f64).abs() < 3.0 * sigma);
        assert!((n[1] as f64 - 0.5 * total as f64).abs() < 3.0 * sigma);
        // cross-pair accidentals only: R·τ_range·N ≈ 1e3·5.2e-9·1e5
        assert!(n[2] + n[3] <= 3, "{n:?}");
        assert!((total as f64 - 1e5).abs() < 5.0 * 1e5f64.sqrt());
    }

    #[test]
    fn deterministic_for_seed_and_thread_count() {
        let mut run = ideal_run(TwoPhotonState::phi_plus(0.9).unwrap(), 5e3, 2.0, 99);
        run.detectors = [DetectorSpec::free_running_ingaas(); 4];
        run.detectors[0].dark_count_rate = 2e3;
        run.shards = 8;
        let a = simulate_run(&run).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| simulate_run(&run).unwrap());
        assert_eq!(a, b);
        run.rng_seed = 100;
        assert_ne!(simulate_run(&run).unwrap(), a);
    }

    #[test]
    fn dark_accidentals_match_rate_formula() {
        let mut run = ideal_run(TwoPhotonState::phi_plus(1.0).unwrap(), 0.0, 10.0, 5);
        for d in &mut run.detectors {
            d.dark_count_rate = 1e5;
        }
        let out = simulate_run(&run).unwrap();
        let range_s = run.tdc.histogram_bins as f64 * run.tdc.bin_width_ps * 1e-12;
        let expected = 4.0 * 1e5 * 1e5 * range_s * 10.0;
        let got: u64 = out.histograms.iter().map(|h| h.total()).sum();
        assert!((got as f64 - expected).abs() < 4.0 * expected.sqrt(), "{got} vs {expected}");
    }

    #[test]
    fn measured_dark_rates_give_rare_accidentals() {
        let mut run = ideal_run(TwoPhotonState::phi_plus(1.0).unwrap(), 0.0, 1000.0, 8);
        for d in &mut run.detectors {
            d.dark_count_rate = 15.0;
        }
        let out = simulate_run(&run).unwrap();
        let expected_window: f64 = 15.0 * 15.0 * 324e-12 * 1000.0;
        assert!((expected_window - 7.29e-5).abs() < 1e-8);
        // the full 64-bin range is 16 windows wide, mean 1.2e-3 per pair;
        // P(N ≥ 3) ≈ 3e-10
        for h in &out.histograms {
            assert!(h.total() < 3, "{}", h.total());
        }
        for s in out.singles {
            let mean = 15.0 * 1000.0;
            assert!((s as f64 - mean).abs() < 4.0 * f64::sqrt(mean));
        }
    }

    #[test]
    fn deadtime_is_non_paralysable() {
        let t = [0.0, 5.0, 9.0, 10.0, 12.0, 25.0];
        assert_eq!(apply_deadtime(&t, 10.0), vec![0.0, 10.0, 25.0]);
        assert_eq!(apply_deadtime(&t, 0.0), t.to_vec());
    }

    #[test]
    fn isolated_peak_window() {
        let mut counts = vec![0; 64];
        counts[20] = 100;
        let w = extract_coincidences(&hist(counts), &TdcSpec::default()).unwrap();
        assert_eq!(w.count, 100);
        assert_eq!(w.peak_bin, 20);
        assert_eq!(w.window_end - w.window_start, 4);
    }

    #[test]
    fn peak_ties_resolve_to_lowest_bin() {
        let mut counts = vec![0; 16];
        counts[5] = 7;
        counts[9] = 7;
        let w = extract_coincidences(&hist(counts), &TdcSpec::default()).unwrap();
        assert_eq!(w.peak_bin, 5);
    }

    #[test]
    fn window_clamps_at_range_edge() {
        let mut counts = vec![0; 16];
        counts[0] = 3;
        counts[1] = 1;
        let w = extract_coincidences(&hist(counts), &TdcSpec::default()).unwrap();
        assert_eq!((w.window_start, w.window_end, w.count), (0, 4, 4));
    }

    #[test]
    fn empty_histogram_has_no_peak() {
        assert!(matches!(
            extract_coincidences(&hist(vec![0; 8]), &TdcSpec::default()),
            Err(Error::NoPeak)
        ));
    }

    #[test]
    fn gaussian_peak_capture_fraction() {
        use rand_distr::Normal;
        use statrs::distribution::{ContinuousCDF, Normal as N};
        let tdc = TdcSpec::default();
        let mut rng = shard_rng(17, 0);
        let g = Normal::new(0.0, 100.0).unwrap();
        let idler: Vec<f64> = {
            let mut v: Vec<f64> = (0..10_000).map(|k| k as f64 * 1e6 + g.sample(&mut rng)).collect();
            v.sort_by(f64::total_cmp);
            v
        };
        let signal: Vec<f64> = (0..10_000).map(|k| k as f64 * 1e6).collect();
        let counts = correlate(&signal, &idler, &tdc);
        let h = CoincidenceHistogram::new(DetectorPair::VV, tdc.bin_edges(), counts, 1.0).unwrap();
        let w = extract_coincidences(&h, &tdc).unwrap();
        let n = N::new(0.0, 100.0).unwrap();
        let p = n.cdf(162.0) - n.cdf(-162.0);
        assert!((p - 0.895).abs() < 1e-3);
        let sigma = (p * (1.0 - p) / 1e4).sqrt();
        let frac = w.count as f64 / 1e4;
        assert!((frac - p).abs() < 3.0 * sigma, "{frac} vs {p}");
    }

    #[test]
    fn flat_background_adds_window_share() {
        use rand_distr::Poisson;
        let mut rng = shard_rng(23, 0);
        let bg = Poisson::new(0.1).unwrap();
        let trials = 4000;
        let mut excess = 0.0;
        for _ in 0..trials {
            let mut counts: Vec<u64> = (0..1000).map(|_| bg.sample(&mut rng) as u64).collect();
            counts[500] += 100;
            let w = extract_coincidences(&hist(counts), &TdcSpec::default()).unwrap();
            excess += w.count as f64 - 100.0;
        }
        let mean = excess / trials as f64;
        // 4 bins × 0.1, sd of the mean ≈ √0.4/√4000 ≈ 0.01
        assert!((mean - 0.4).abs() < 0.05, "{mean}");
    }

    #[test]
    fn run_validation() {
        let mut run = ideal_run(TwoPhotonState::phi_plus(1.0).unwrap(), 1.0, 1.0, 1);
        run.acquisition_time_s = 0.0;
        assert!(simulate_run(&run).is_err());
        run.acquisition_time_s = 1.0;
        run.detectors[2].efficiency = 1.5;
        assert!(simulate_run(&run).is_err());
        run.detectors[2].efficiency = 1.0;
        run.tdc.coincidence_window_bins = 0;
        assert!(simulate_run(&run).is_err());
    }
}
