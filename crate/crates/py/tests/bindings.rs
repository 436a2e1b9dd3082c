use pyo3::prelude::*;
use pyo3::types::PyDict;
use pyo3::wrap_pymodule;

fn with_module(code: &std::ffi::CStr) {
    Python::initialize();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("sloc", wrap_pymodule!(sloc::sloc)(py)).unwrap();
        py.run(code, Some(&globals), None).map_err(|e| e.display(py)).unwrap();
    });
}

#[test]
fn targets_and_tilts() {
    with_module(
        c"
g = sloc.Target.gaussian([1.0, 0.0], [[2.0, 0.0], [0.0, 1.0]])
assert g.dim == 2 and g.kind == 'gaussian'
m = g.tilt_mean([0.0, 0.0], 0.0)
assert abs(m[0] - 1.0) < 1e-12
assert len(g.sample(5, 0)) == 5 and g.sample(5, 0) == g.sample(5, 0)
",
    );
}

#[test]
fn schedule_and_bounds() {
    with_module(
        c"
rows = sloc.lsi_schedule(2.0, [0.5, 1.0])
assert rows[-1][3] == 2.0 and rows[-1][4] == 0.0
assert sloc.lsi_lower_bound(1.0, 1.0) == 0.5
kl = sloc.chain_law_kl(sloc.Target.gaussian([2.0], [[1.0]]), sloc.Target.gaussian([0.0], [[1.0]]), 1.0, 2)
assert abs(kl[2] / kl[1] - 0.25) < 1e-12
",
    );
}

#[test]
fn errors_become_value_errors() {
    with_module(
        c"
for bad in (lambda: sloc.Target.gaussian([0.0], [[0.0]]), lambda: sloc.run_suite('nope'), lambda: sloc.stability_factor(-1.0, 0.5)):
    try:
        bad()
    except ValueError:
        continue
    raise AssertionError('expected ValueError')
",
    );
}
