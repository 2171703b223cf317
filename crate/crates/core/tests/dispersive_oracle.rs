//! Full-drive versus effective propagation, pinned to an independent
//! SciPy (DOP853, rtol 1e-10) propagation of the same rotating-frame model.

use std::f64::consts::PI;

use diii_core::chain_model::ChainSpec;
use diii_core::ddm_engine::{Envelope, HardwareSpec, PulseSynthesis};
use diii_core::dynamics::effective_vs_full;
use diii_core::many_body::StateVector;

#[test]
fn occupation_states_match_reference_infidelities() {
    let hw = HardwareSpec::compressed(0.1);
    let t = 0.01;
    let s = PulseSynthesis::staggered(2, t, t, t, -t);
    let w = t * t / hw.eta;
    let area = PI / (2.0 * w);
    let ramp = 0.2 * area;
    let env = Envelope::Sin2RampHoldRamp { ramp, hold: area - 0.75 * ramp };
    let spec = ChainSpec::new(2, -w, -w, 0.0);
    let states = [StateVector::basis(16, 0), StateVector::basis(16, 1)];
    let c = effective_vs_full(&spec, &hw, &s, env, &states, 1e-9).unwrap();
    let reference = [0.0036576999288, 0.0062357290399];
    for (f, want) in c.fidelities.iter().zip(reference) {
        let got = 1.0 - f;
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    assert!((c.effective_time - area).abs() < 1e-9 * area);
}
