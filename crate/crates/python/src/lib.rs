use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hawkes4d::analytics::{signature_plot_analytic, theoretical_autocov, Channel};
use hawkes4d::estimator::{estimate_g, solve_fredholm, FredholmOptions};
use hawkes4d::impact::{market_impact_profile, meta_order_flow, permanent_impact, response_function};
use hawkes4d::io::{load_spec, read_events, write_events, KERNEL_NAMES};
use hawkes4d::model::{mean_intensity, Side};
use hawkes4d::simulator::{simulate, EventStream, EventType, SimulationConfig};
use hawkes4d::ModelSpec;

create_exception!(hawkes4d_py, HawkesError, PyException);

fn err(e: hawkes4d::Error) -> PyErr {
    HawkesError::new_err(format!("[{}] {e}", e.kind()))
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(HawkesError::new_err)
}

fn side(s: &str) -> PyResult<Side> {
    match s {
        "buy" => Ok(Side::Buy),
        "sell" => Ok(Side::Sell),
        other => Err(HawkesError::new_err(format!("side must be buy or sell, got {other:?}"))),
    }
}

/// A model loaded from a spec document.
#[pyclass(name = "Spec", frozen)]
struct PySpec {
    inner: ModelSpec,
}

#[pymethods]
impl PySpec {
    #[staticmethod]
    #[pyo3(signature = (path, grid_step=None))]
    fn load(path: PathBuf, grid_step: Option<f64>) -> PyResult<Self> {
        Ok(Self { inner: load_spec(&path, grid_step).map_err(err)? })
    }

    #[getter]
    fn grid_step(&self) -> f64 {
        self.inner.grid_step()
    }

    /// Stability conditions as a dict.
    fn stability<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let r = self.inner.stability();
        let d = PyDict::new(py);
        d.set_item("stable", r.stable)?;
        d.set_item("margin", r.margin)?;
        d.set_item("spectral_radius", r.spectral_radius)?;
        d.set_item("h1_holds", r.h1_holds)?;
        for (k, v) in [
            ("a_plus", r.a_plus),
            ("b_plus", r.b_plus),
            ("c_plus", r.c_plus),
            ("a_minus", r.a_minus),
            ("b_minus", r.b_minus),
            ("c_minus", r.c_minus),
        ] {
            d.set_item(k, v)?;
        }
        Ok(d)
    }

    /// `(trade rate per side, price rate per side)`.
    fn mean_intensity(&self) -> PyResult<(f64, f64)> {
        mean_intensity(&self.inner).map_err(err)
    }

    #[pyo3(signature = (horizon, seed=42))]
    fn simulate(&self, horizon: f64, seed: u64) -> PyResult<PyEvents> {
        let inner = simulate(&self.inner, &SimulationConfig::new(horizon, seed)).map_err(err)?;
        Ok(PyEvents { inner })
    }

    /// Autocovariance of increments over `h` at the given lags; lag 0 excludes the atom.
    #[pyo3(signature = (h, lags, channel="price"))]
    fn autocov(&self, h: f64, lags: Vec<f64>, channel: &str) -> PyResult<Vec<f64>> {
        let channel: Channel = parse(channel)?;
        Ok(theoretical_autocov(&self.inner, h, &lags, channel).map_err(err)?.values)
    }

    fn signature_plot(&self, scales: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(signature_plot_analytic(&self.inner, &scales).map_err(err)?.values)
    }

    /// Impact of a uniform meta-order: `(times, values, permanent level)`.
    #[pyo3(signature = (duration, rate, horizon, side="buy"))]
    fn impact(&self, duration: f64, rate: f64, horizon: f64, side: &str) -> PyResult<(Vec<f64>, Vec<f64>, f64)> {
        let flow = meta_order_flow(duration, self::side(side)?, rate, self.inner.grid_step()).map_err(err)?;
        let p = market_impact_profile(&self.inner, &flow, horizon).map_err(err)?;
        Ok((p.times, p.values, p.permanent_level))
    }

    /// Long-run price move per unit buy order.
    fn permanent_impact(&self) -> PyResult<f64> {
        permanent_impact(&self.inner).map_err(err)
    }

    /// Expected price move after a buy trade: `(times, values)`.
    fn response(&self, horizon: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let c = response_function(&self.inner, horizon).map_err(err)?;
        Ok((c.abscissa, c.values))
    }
}

/// Event stream with components Tm, Tp, Nm, Np.
#[pyclass(name = "Events", frozen)]
struct PyEvents {
    inner: EventStream,
}

#[pymethods]
impl PyEvents {
    #[staticmethod]
    #[pyo3(signature = (path, horizon=None))]
    fn read_csv(path: PathBuf, horizon: Option<f64>) -> PyResult<Self> {
        Ok(Self { inner: read_events(&path, horizon).map_err(err)? })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_events(&path, &self.inner).map_err(err)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    fn components<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for i in 0..4 {
            let ty = EventType::from_index(i);
            d.set_item(ty.as_str(), self.inner.component(ty).to_vec())?;
        }
        Ok(d)
    }

    fn counts(&self) -> [usize; 4] {
        self.inner.counts()
    }

    /// Nonparametric kernel estimate: kernel name → bin values, plus the bin width.
    #[pyo3(signature = (bin_width, t_max))]
    fn estimate<'py>(&self, py: Python<'py>, bin_width: f64, t_max: f64) -> PyResult<Bound<'py, PyDict>> {
        let g = estimate_g(&self.inner, bin_width, t_max).map_err(err)?;
        let sol = solve_fredholm(&g, FredholmOptions::default()).map_err(err)?;
        let d = PyDict::new(py);
        let blocks = sol.kernels.blocks();
        for (b, block) in blocks.iter().enumerate() {
            d.set_item(KERNEL_NAMES[2 * b], block.entry(0, 0).samples().to_vec())?;
            d.set_item(KERNEL_NAMES[2 * b + 1], block.entry(0, 1).samples().to_vec())?;
        }
        d.set_item("bin_width", bin_width)?;
        Ok(d)
    }
}

#[pymodule]
fn hawkes4d_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpec>()?;
    m.add_class::<PyEvents>()?;
    m.add("HawkesError", m.py().get_type::<HawkesError>())?;
    Ok(())
}
