use std::sync::Arc;

use esfem::fem::{
    esfem_step, run_diffusion, Assembler, DiffusionOptions, FrameState, Marcher, NodalField, StepContext,
    SubstepPolicy,
};
use esfem::geometry::{icosphere, synth_sequence, MeshSequence, SynthKind};
use esfem::linalg::SolverOptions;

fn x1_field(seq: &MeshSequence) -> NodalField {
    NodalField::new(seq.first().vertices().iter().map(|p| p.x).collect(), 0.0)
}

fn rms_relative_error(computed: &[f64], exact: &[f64]) -> f64 {
    let num: f64 = computed.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = exact.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

fn eigen_error(level: u32, dt: f64) -> f64 {
    let seq = MeshSequence::from_static(icosphere(level, 1.0)).unwrap();
    let u0 = x1_field(&seq);
    let run = run_diffusion(&seq, &u0, 1.0, dt, 0.1, &DiffusionOptions::default()).unwrap();
    let exact: Vec<f64> = u0.values().iter().map(|x| (-0.2f64).exp() * x).collect();
    rms_relative_error(run.final_field().values(), &exact)
}

#[test]
fn constant_is_a_steady_state_on_a_still_surface() {
    let seq = MeshSequence::from_static(icosphere(2, 1.0)).unwrap();
    let u0 = NodalField::constant(seq.first().vertex_count(), 0.7, 0.0);
    let run = run_diffusion(&seq, &u0, 3.0, 0.1, 1.0, &DiffusionOptions::default()).unwrap();
    for v in run.final_field().values() {
        assert!((v - 0.7).abs() < 1e-12, "{v}");
    }
}

#[test]
fn one_step_run_equals_a_single_step() {
    let seq = synth_sequence(SynthKind::OscillatingEllipsoid { amplitude: 0.25, period: 4.0 }, 2, 3, 1.0).unwrap();
    let u0 = x1_field(&seq);
    let run = run_diffusion(&seq, &u0, 0.3, 0.25, 0.25, &DiffusionOptions::default()).unwrap();
    assert_eq!(run.trajectory.len(), 2);

    let asm = Assembler::for_mesh(seq.first());
    let prev = Arc::new(FrameState::new(&asm, seq.at(0.0).unwrap()).unwrap());
    let curr = Arc::new(FrameState::new(&asm, seq.at(0.25).unwrap()).unwrap());
    let ctx = StepContext::new(&asm, prev, curr, 0.25, 0.25).unwrap();
    let (u, _) = esfem_step(&ctx, 0.3, &u0, &SolverOptions::default()).unwrap();
    assert_eq!(u.values(), run.final_field().values());
}

#[test]
fn material_velocity_is_normal_and_remainder_tangential() {
    let seq = synth_sequence(SynthKind::OscillatingEllipsoid { amplitude: 0.25, period: 4.0 }, 2, 3, 1.0).unwrap();
    let mut marcher = Marcher::new(&seq, 0.5, 1.0, SubstepPolicy::Interpolate).unwrap();
    let ctx = marcher.advance().unwrap().unwrap();
    let normals = ctx.curr().geometry().normals();
    for ((w, v), n) in ctx.quadrature_velocity().iter().zip(ctx.material_velocity()).zip(normals) {
        for q in 0..3 {
            assert!(v[q].cross(n).norm() < 1e-12);
            assert!((w[q] - v[q]).dot(n).abs() < 1e-10);
        }
    }
    assert!(ctx.advection().is_some());
}

#[test]
fn expanding_sphere_dilutes_uniformly() {
    let seq = synth_sequence(SynthKind::ExpandingSphere { initial_radius: 1.0, rate: 0.1 }, 3, 11, 0.1).unwrap();
    let u0 = NodalField::constant(seq.first().vertex_count(), 2.0, 0.0);
    let run = run_diffusion(&seq, &u0, 0.5, 0.01, 1.0, &DiffusionOptions::default()).unwrap();
    let expected = 2.0 / 1.1f64.powi(2);
    let u = run.final_field();
    let mean = u.values().iter().sum::<f64>() / u.len() as f64;
    assert!((mean - expected).abs() / expected < 5e-3, "{mean} vs {expected}");
    assert!(run.max_relative_mass_drift() < 1e-9);
}

#[test]
fn eigenfunction_decays_at_rate_two() {
    let err = eigen_error(3, 1e-3);
    assert!(err < 0.02, "{err}");
}

#[test]
fn halving_dt_halves_the_temporal_error() {
    // The exact discrete reference is the same mesh with a much smaller
    // step, which removes the spatial error from the comparison.
    let seq = MeshSequence::from_static(icosphere(2, 1.0)).unwrap();
    let u0 = x1_field(&seq);
    let at = |dt: f64| {
        run_diffusion(&seq, &u0, 1.0, dt, 0.2, &DiffusionOptions::default())
            .unwrap()
            .final_field()
            .values()
            .to_vec()
    };
    let reference = at(1.25e-4);
    let e1 = rms_relative_error(&at(0.02), &reference);
    let e2 = rms_relative_error(&at(0.01), &reference);
    let ratio = e1 / e2;
    assert!((ratio - 2.0).abs() < 0.15, "ratio {ratio} ({e1}, {e2})");
}

#[test]
fn mass_is_conserved_on_a_deforming_surface() {
    let seq = synth_sequence(SynthKind::OscillatingEllipsoid { amplitude: 0.25, period: 4.0 }, 2, 6, 1.0).unwrap();
    let u0 = NodalField::new(
        seq.first().vertices().iter().map(|p| 1.0 + p.x * p.y + 0.3 * p.z).collect(),
        0.0,
    );
    let run = run_diffusion(&seq, &u0, 0.05, 0.04, 5.0, &DiffusionOptions::default()).unwrap();
    for pair in run.records.windows(2) {
        let (a, b) = (pair[0].mass, pair[1].mass);
        assert!((a - b).abs() <= 10.0 * 1e-10 * a.abs().max(1.0) * 10.0, "{a} -> {b}");
    }
    assert!(run.max_relative_mass_drift() < 1e-8);
}

#[test]
fn still_surface_obeys_a_discrete_maximum_principle() {
    let seq = MeshSequence::from_static(icosphere(3, 1.0)).unwrap();
    let u0 = NodalField::new(
        seq.first().vertices().iter().map(|p| if p.z > 0.5 { 1.0 } else { 0.0 }).collect(),
        0.0,
    );
    let run = run_diffusion(&seq, &u0, 1.0, 0.01, 0.2, &DiffusionOptions::default()).unwrap();
    for pair in run.trajectory.windows(2) {
        assert!(pair[1].min() >= pair[0].min() - 1e-8, "{} < {}", pair[1].min(), pair[0].min());
        assert!(pair[1].max() <= pair[0].max() + 1e-8, "{} > {}", pair[1].max(), pair[0].max());
    }
}

#[test]
fn streamline_term_shrinks_like_h_squared_relative_to_stiffness() {
    let mut ratios = Vec::new();
    for level in 1..=4 {
        let seq = synth_sequence(SynthKind::OscillatingEllipsoid { amplitude: 0.25, period: 4.0 }, level, 3, 1.0).unwrap();
        let mut marcher = Marcher::new(&seq, 0.5, 0.5, SubstepPolicy::Interpolate).unwrap();
        let ctx = marcher.advance().unwrap().unwrap();
        let sld = ctx.streamline().unwrap().norm_inf() * ctx.g_h();
        let stiff = ctx.curr().stiffness().norm_inf();
        let h = ctx.curr().h();
        ratios.push(sld / stiff / (h * h));
    }
    // ratio / h² stays bounded.
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min < 3.0, "{ratios:?}");
}

#[test]
fn aligned_policy_rejects_misaligned_frames() {
    let seq = synth_sequence(SynthKind::ExpandingSphere { initial_radius: 1.0, rate: 0.1 }, 1, 3, 0.3).unwrap();
    assert!(Marcher::new(&seq, 0.2, 0.6, SubstepPolicy::RequireAligned).is_err());
    assert!(Marcher::new(&seq, 0.1, 0.6, SubstepPolicy::RequireAligned).is_ok());
    assert!(Marcher::new(&seq, 0.1, 0.7, SubstepPolicy::Interpolate).is_err());
    assert!(Marcher::new(&seq, -0.1, 0.5, SubstepPolicy::Interpolate).is_err());
}

#[test]
fn spatial_error_decreases_with_refinement() {
    let errors: Vec<f64> = (2..=4).map(|level| eigen_error(level, 1e-4)).collect();
    eprintln!("eigen errors {errors:?}");
    for pair in errors.windows(2) {
        assert!(pair[1] < pair[0] / 2.5, "{errors:?}");
    }
}
