use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(f: impl for<'py> FnOnce(Python<'py>, &Bound<'py, PyDict>)) {
    Python::initialize();
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(nfp::nfp)(py);
        let globals = PyDict::new(py);
        globals.set_item("nfp", module).unwrap();
        f(py, &globals);
    });
}

fn exec(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(globals), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn module_exposes_problem_equilibrium_and_run() {
    with_module(|py, g| {
        exec(
            py,
            g,
            r#"
p = nfp.Problem(2.0, [(-1.0, 1.0)], [200], {"kind": "constant", "value": 1.0},
                {"kind": "quadratic", "lambda": 2.0},
                {"kind": "gaussian-bump", "amplitude": 1.0, "width": 0.3, "base": 0.5},
                0.02, lambda_=2.0, record_every=1)
h = 2.0 / 200
assert abs(p.equilibrium().constant - (4 / 3 - h * h / 12)) < 1e-12
r = p.run()
assert len(r) == r.accepted_steps + 1
assert max(abs(m - 1.0) for m in r.mass) < 1e-12
assert r.energy[-1] < r.energy[0]
assert abs(p.free_energy(r.final_density) - r.energy[-1]) < 1e-14
assert p.entropy_terms(r.final_density)["i4"] == 0.0
"#,
        );
    });
}

#[test]
fn errors_map_to_python_exceptions() {
    with_module(|py, g| {
        exec(
            py,
            g,
            r#"
try:
    nfp.Problem(0.9, [(0.0, 1.0)], [10], {"kind": "constant", "value": 1.0},
                {"kind": "constant", "value": 0.0}, {"kind": "constant", "value": 1.0}, 1.0)
    raise AssertionError("alpha <= 1 accepted")
except ValueError as e:
    assert "alpha" in str(e)
try:
    nfp.gronwall_threshold(1.0, 0.0, 1.0)
    raise AssertionError("C8 = 0 with C9 > 0 accepted")
except ValueError:
    pass
"#,
        );
    });
}
