//! Python bindings: sensing profiles, the plaintext auction mechanisms,
//! full protocol runs (board dump, counters, audits), and the campaign
//! drivers. Exact rationals cross the boundary as "num/den" strings.

use std::collections::BTreeSet;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pvi_core::harness::{
    counters_csv, parse_ratio, ratio_str, run_equivalence, run_game, run_overhead, run_single,
    run_truthfulness, ScenarioSpec,
};
use pvi_core::mechanisms::{
    run_heterogeneous, run_homogeneous, run_submodular, AuctionOutcome, CoverageUtility,
    SensingProfile, UserId,
};
use pvi_core::protocol::pvi_h::run_pvi_h_opts;
use pvi_core::protocol::pvi_s::run_pvi_s_opts;
use pvi_core::protocol::{
    AuctionConfig, AuditFinding, CryptoConfig, JobModel, RunOptions, VerificationPolicy,
};

fn err(e: pvi_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ratio_arg(s: &str) -> PyResult<num_rational::BigRational> {
    parse_ratio(s).map_err(err)
}

/// One user's sealed input: bid (exact rational string), and either a job
/// limit (ranked models) or an assignment set (submodular model).
#[pyclass]
#[derive(Clone)]
struct Profile {
    inner: SensingProfile,
}

#[pymethods]
impl Profile {
    #[new]
    #[pyo3(signature = (user_id, bid, limit=1, assignments=None))]
    fn new(user_id: u32, bid: &str, limit: u64, assignments: Option<Vec<u32>>) -> PyResult<Self> {
        let bid = ratio_arg(bid)?;
        let inner = match assignments {
            Some(a) => SensingProfile::submodular(UserId(user_id), bid, a.into_iter().collect()),
            None => SensingProfile::heterogeneous(UserId(user_id), bid, limit),
        };
        Ok(Profile { inner })
    }

    #[getter]
    fn user_id(&self) -> u32 {
        self.inner.user_id.0
    }

    #[getter]
    fn bid(&self) -> String {
        ratio_str(&self.inner.bid)
    }

    #[getter]
    fn limit(&self) -> u64 {
        self.inner.limit
    }

    #[getter]
    fn assignments(&self) -> Vec<u32> {
        self.inner.assignments.iter().copied().collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Profile(user_id={}, bid='{}', limit={}, assignments={:?})",
            self.inner.user_id.0,
            ratio_str(&self.inner.bid),
            self.inner.limit,
            self.inner.assignments
        )
    }
}

fn ground_size(m: u32, profiles: &[SensingProfile]) -> u32 {
    if m > 0 {
        m
    } else {
        profiles
            .iter()
            .flat_map(|p| p.assignments.iter().copied())
            .max()
            .map_or(0, |x| x + 1)
    }
}

fn outcome_dict(py: Python<'_>, out: &AuctionOutcome) -> PyResult<Py<PyDict>> {
    let d = PyDict::new_bound(py);
    d.set_item("winners", out.winners.iter().map(|w| w.0).collect::<Vec<_>>())?;
    let payments = PyDict::new_bound(py);
    let allocation = PyDict::new_bound(py);
    for (u, p) in &out.payments {
        payments.set_item(u.0, ratio_str(p))?;
    }
    for (u, f) in &out.allocation {
        allocation.set_item(u.0, *f)?;
    }
    d.set_item("payments", payments)?;
    d.set_item("allocation", allocation)?;
    d.set_item("per_job_price", out.per_job_price.as_ref().map(ratio_str))?;
    d.set_item("total_paid", ratio_str(&out.total_paid()))?;
    Ok(d.unbind())
}

/// Run the plaintext mechanism: model "h" | "het" | "sub".
#[pyfunction]
#[pyo3(signature = (model, budget, profiles, m=0))]
fn auction(
    py: Python<'_>,
    model: &str,
    budget: &str,
    profiles: Vec<Profile>,
    m: u32,
) -> PyResult<Py<PyDict>> {
    let model = JobModel::parse(model).map_err(err)?;
    let budget = ratio_arg(budget)?;
    let profiles: Vec<SensingProfile> = profiles.into_iter().map(|p| p.inner).collect();
    let out = match model {
        JobModel::Homogeneous => run_homogeneous(&profiles, &budget),
        JobModel::Heterogeneous => run_heterogeneous(&profiles, &budget),
        JobModel::Submodular => {
            let ground: BTreeSet<u32> = (0..ground_size(m, &profiles)).collect();
            let utility = CoverageUtility::from_profiles(ground, &profiles);
            run_submodular(&profiles, &budget, &utility)
        }
    };
    outcome_dict(py, &out)
}

/// Run the full privacy-preserving protocol for one instance. Returns the
/// outcome plus board dump, counters CSV, and any audit findings.
#[pyfunction]
#[pyo3(signature = (model, budget, profiles, m=0, seed=7, audit=None, small_keys=true))]
#[allow(clippy::too_many_arguments)]
fn protocol(
    py: Python<'_>,
    model: &str,
    budget: &str,
    profiles: Vec<Profile>,
    m: u32,
    seed: u64,
    audit: Option<Vec<u32>>,
    small_keys: bool,
) -> PyResult<Py<PyDict>> {
    let model = JobModel::parse(model).map_err(err)?;
    let budget = ratio_arg(budget)?;
    let profiles: Vec<SensingProfile> = profiles.into_iter().map(|p| p.inner).collect();
    let bid_domain: Vec<_> = profiles
        .iter()
        .map(|p| p.bid.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let limit_domain: Vec<u64> = profiles
        .iter()
        .map(|p| p.limit)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let cfg = AuctionConfig {
        tid: 1,
        model,
        budget: budget.clone(),
        deadline: 2,
        bid_domain,
        limit_domain,
        ground_set_size: ground_size(m, &profiles),
        verification: VerificationPolicy {
            alpha: ratio_arg("1/10")?,
            fine: ratio_arg("900")?,
            p_max: budget,
        },
        seed,
        crypto: if small_keys {
            CryptoConfig::small()
        } else {
            CryptoConfig::default()
        },
        headroom: 10_000,
    };
    cfg.validate().map_err(err)?;
    let opts = RunOptions {
        force_audit: audit.unwrap_or_default().into_iter().map(UserId).collect(),
        skip_coin_audits: true,
        ..RunOptions::default()
    };
    let t = match model {
        JobModel::Submodular => run_pvi_s_opts(&cfg, &profiles, opts),
        _ => run_pvi_h_opts(&cfg, &profiles, opts),
    }
    .map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("outcome", outcome_dict(py, &t.outcome)?)?;
    d.set_item("board", t.board.dump())?;
    d.set_item("counters_csv", counters_csv("protocol", &t))?;
    let audits: Vec<(u32, String, Option<(String, String)>)> = t
        .audits
        .iter()
        .map(|a| match &a.finding {
            AuditFinding::Confirmed => (a.user.0, "confirmed".to_string(), None),
            AuditFinding::Discrepancy { expected, observed } => (
                a.user.0,
                "discrepancy".to_string(),
                Some((ratio_str(expected), ratio_str(observed))),
            ),
        })
        .collect();
    d.set_item("audits", audits)?;
    Ok(d.unbind())
}

fn scenario(text: &str) -> PyResult<ScenarioSpec> {
    ScenarioSpec::parse(text).map_err(err)
}

/// Oracle-equivalence campaign over a scenario text; returns (passed, report).
#[pyfunction]
fn equivalence(text: &str) -> PyResult<(bool, String)> {
    let r = run_equivalence(&scenario(text)?).map_err(err)?;
    Ok((r.passed(), r.render()))
}

/// Exhaustive bid-deviation campaign; returns (passed, report).
#[pyfunction]
fn truthfulness(text: &str) -> PyResult<(bool, String)> {
    let r = run_truthfulness(&scenario(text)?).map_err(err)?;
    Ok((r.passed(), r.render()))
}

/// Overhead sweep with log-log scaling fits; returns (passed, report).
#[pyfunction]
fn overhead(text: &str) -> PyResult<(bool, String)> {
    let r = run_overhead(&scenario(text)?).map_err(err)?;
    Ok((r.passed(), r.render()))
}

/// Verification-game table over a grid of audit probabilities
/// ("num/den" strings); returns (passed, table).
#[pyfunction]
#[pyo3(signature = (alphas, trials=10_000, seed=7))]
fn game(alphas: Vec<String>, trials: u64, seed: u64) -> PyResult<(bool, String)> {
    let alphas = alphas
        .iter()
        .map(|a| ratio_arg(a))
        .collect::<PyResult<Vec<_>>>()?;
    let r = run_game(&alphas, trials, seed).map_err(err)?;
    Ok((r.passed(), r.render()))
}

/// One full scenario run; returns board/counters/outcome/timing artifacts.
#[pyfunction]
fn run(py: Python<'_>, text: &str) -> PyResult<Py<PyDict>> {
    let (t, artifacts) = run_single(&scenario(text)?).map_err(err)?;
    let d = PyDict::new_bound(py);
    d.set_item("outcome", outcome_dict(py, &t.outcome)?)?;
    d.set_item("board", artifacts.board)?;
    d.set_item("counters_csv", artifacts.counters)?;
    d.set_item("outcome_text", artifacts.outcome)?;
    d.set_item("timing", artifacts.timing)?;
    Ok(d.unbind())
}

#[pymodule]
fn pvi_py(_py: Python, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Profile>()?;
    m.add_function(wrap_pyfunction!(auction, m)?)?;
    m.add_function(wrap_pyfunction!(protocol, m)?)?;
    m.add_function(wrap_pyfunction!(equivalence, m)?)?;
    m.add_function(wrap_pyfunction!(truthfulness, m)?)?;
    m.add_function(wrap_pyfunction!(overhead, m)?)?;
    m.add_function(wrap_pyfunction!(game, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
