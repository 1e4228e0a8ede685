use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(script: &std::ffi::CStr) -> PyResult<()> {
    Python::attach(|py| {
        let locals = PyDict::new(py);
        locals.set_item("em", pyo3::wrap_pymodule!(pyemftd::pyemftd)(py))?;
        py.run(script, None, Some(&locals))
    })
}

#[test]
fn closed_forms_and_tables() {
    with_module(
        c"
assert abs(em.diffusion_first_passage_cdf(0.2, 0.0, 0.2, 1.0) - 0.3173105078629141) < 1e-12
assert abs(em.martingale_drift(0.2, 0.5, 0.25) - (-0.02 + 0.1)) < 1e-15
assert em.lstar_c_for_grade('B') == 1.0
assert em.lambda_for_grade('BB') == 0.5
",
    )
    .unwrap();
}

#[test]
fn simulation_is_reproducible() {
    with_module(
        c"
p = em.ProcessParams(0.25, 0.5, 0.3)
cfg = em.PathConfig(5.0, 2000, seed=3, dt=1.0 / 50.0)
a = em.simulate_crossings(p, [1.0], cfg)
b = em.simulate_crossings(p, [1.0], cfg)
assert a.times_for(1.0) == b.times_for(1.0)
curve = em.estimate_default_curve(a, 1.0, [1.0, 5.0])
assert 0.0 < curve.p[0] < curve.p[1] < 1.0
",
    )
    .unwrap();
}

#[test]
fn domain_errors_become_value_errors() {
    let err = with_module(c"em.ProcessParams(0.0, 0.5, 0.25)").unwrap_err();
    Python::attach(|py| assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py)));
    let err = with_module(c"em.lstar_c_for_grade('AAA')").unwrap_err();
    Python::attach(|py| assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py)));
}
