//! Runs the bindings inside an embedded interpreter.

use noisy_rd_py::noisy_rd_py;
use pyo3::ffi::c_str;
use pyo3::prelude::*;

fn with_module<F: FnOnce(Python<'_>)>(f: F) {
    pyo3::append_to_inittab!(noisy_rd_py);
    Python::initialize();
    Python::attach(f);
}

#[test]
fn bindings_round_trip() {
    with_module(|py| {
        let code = c_str!(
            r#"
import math
import noisy_rd_py as nr

m = nr.Model.bes(0.1)
rate, lam = m.rate(0.1)
assert abs(rate - nr.bes_rate(0.1, 0.1)) < 1e-8
assert abs(lam - math.log(17)) < 1e-8
vt, v = nr.bes_dispersions(0.1, 0.1)
disp = m.dispersion(0.1)
assert abs(disp["vtilde"] - vt) < 1e-8 and abs(disp["v"] - v) < 1e-8

coin = nr.Block(nr.Model.bes(0.0), 2, "1/4", 0.1)
lo, hi, _, _ = coin.bracket()
assert lo <= 4 <= hi
assert coin.converse(3) <= coin.random_coding(3)[0]

try:
    nr.Block(m, 0, "0.1", 0.1)
except ValueError:
    pass
else:
    raise AssertionError("k = 0 accepted")
"#
        );
        py.run(code, None, None).unwrap();
    });
}
