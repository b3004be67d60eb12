use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module(code: &str) {
    pyo3::append_to_inittab!(gepnet_py);
    Python::attach(|py| {
        let locals = PyDict::new(py);
        let src = std::ffi::CString::new(format!("import gepnet_py as g\n{code}")).unwrap();
        py.run(&src, None, Some(&locals)).unwrap_or_else(|e| panic!("{e}"));
    });
}

use gepnet_py::gepnet_py;

#[test]
fn exposes_constants_and_models() {
    with_module(
        r#"
rho, eps = g.constants("tanh")
assert abs(rho - 0.6057055096) < 1e-8
assert abs(eps - 0.0274153260) < 1e-8
m = g.Model(d=6, p=6, n=3)
assert (m.d, m.p, m.n) == (6, 6, 3)
ds = g.gen_dataset(m, t=1.0, seed=5)
assert len(ds.y) == 3
null = g.Model(d=4, p=4, n=2, readout="zero", delta=0.25)
assert abs(g.gen_error(null, n_outer=4, n_test=3, m=200).value - 0.25) < 1e-12
try:
    g.Model(d=4, p=4, n=2, delta=-1.0)
    raise AssertionError("negative delta accepted")
except ValueError:
    pass
"#,
    );
}
