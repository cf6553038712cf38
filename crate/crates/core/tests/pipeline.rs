use std::f64::consts::PI;

use sagnac_core::analysis::wrap_phase;
use sagnac_core::pipeline::{run_chsh, run_fringes, Setup, FRINGE_SIGNAL_PHASES};

#[test]
fn fringes_recover_configured_coherence() {
    let setup = Setup { gamma: 0.973, ..Setup::measured() };
    let families = run_fringes(&setup, 24, 8).unwrap();
    assert_eq!(families.len(), 2);
    for (fam, phi_s) in families.iter().zip(FRINGE_SIGNAL_PHASES) {
        assert_eq!(fam.phi_s, phi_s);
        for fit in &fam.fits {
            assert!((fit.visibility - 0.973).abs() < 3.0 * fit.visibility_sigma, "{fit:?}");
        }
        let same = fam.fits[0].phase_offset;
        for (k, fit) in fam.fits.iter().enumerate() {
            let expected = if k < 2 { same } else { same + PI };
            assert!(wrap_phase(fit.phase_offset - expected).abs() < 0.05, "{k}: {}", fit.phase_offset);
        }
    }
    // the −π/2 family is shifted by the fixed signal phase
    let shift = wrap_phase(families[1].fits[0].phase_offset - families[0].fits[0].phase_offset);
    assert!((shift + PI / 2.0).abs() < 0.05, "{shift}");
}

#[test]
fn noise_subtraction_raises_s() {
    let r = run_chsh(&Setup::noisy(), 3).unwrap();
    assert!(r.net.s > r.raw.s);
    assert!(r.raw.violation_sigmas() > 5.0);
    assert!((r.raw.s - 2.50).abs() < 3.0 * r.raw.s_sigma, "{}", r.raw.s);
}

#[test]
fn chsh_is_deterministic_per_seed() {
    let setup = Setup { acquisition_time_s: 0.2, ..Setup::measured() };
    assert_eq!(run_chsh(&setup, 21).unwrap(), run_chsh(&setup, 21).unwrap());
    assert_ne!(run_chsh(&setup, 21).unwrap(), run_chsh(&setup, 22).unwrap());
}
