//! Acceptance campaign: the eight release criteria, each reported as one
//! pass/fail line. Tolerances are pinned here; a red line means the
//! property is violated, not that the test is flaky (all randomness is
//! seeded).

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_rational::BigRational;
use num_traits::One;
use rand::Rng;

use pvi_core::crypto::blind_sig::{blind_sign, verify, SignerKey};
use pvi_core::crypto::group::{derive_rng, GroupParams};
use pvi_core::crypto::ot::ot_transfer;
use pvi_core::crypto::paillier::{paillier_add, paillier_keygen, paillier_scale};
use pvi_core::harness::campaigns::{campaign_suite, run_overhead, run_single};
use pvi_core::harness::{
    feasibility_check, oracle_outcome, run_equivalence, run_truthfulness, EquivalenceReport,
    ScenarioSpec,
};
use pvi_core::mechanisms::UserId;
use pvi_core::protocol::pvi_h::run_pvi_h_opts;
use pvi_core::protocol::pvi_s::run_pvi_s_opts;
use pvi_core::protocol::{
    audit_coin, cheating_game, AuditFinding, CryptoConfig, JobModel, Misbehavior, RunOptions,
    VerificationPolicy,
};

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn bid_grid(hi: i64) -> Vec<BigRational> {
    (1..=hi).map(|i| ratio(i, 1)).collect()
}

/// Equivalence campaigns shared by criteria 1, 3, and 7 (512-bit keys).
fn equivalence_specs() -> Vec<ScenarioSpec> {
    let mut h = ScenarioSpec::defaults(JobModel::Homogeneous);
    h.n = 20;
    h.bid_domain = bid_grid(10);
    h.budget = ratio(12, 1);
    h.instances = 500;
    h.seed = 101;

    let mut het = ScenarioSpec::defaults(JobModel::Heterogeneous);
    het.n = 20;
    het.bid_domain = bid_grid(10);
    het.limit_domain = vec![1, 2, 3];
    het.budget = ratio(24, 1);
    het.instances = 500;
    het.seed = 102;

    let mut sub = ScenarioSpec::defaults(JobModel::Submodular);
    sub.n = 12;
    sub.m = 8;
    sub.bid_domain = bid_grid(4);
    sub.budget = ratio(5, 1);
    sub.instances = 200;
    sub.seed = 103;

    vec![h, het, sub]
}

/// Truthfulness campaigns shared by criteria 2 and 3 (exact arithmetic).
fn truthfulness_specs() -> Vec<ScenarioSpec> {
    let mut h = ScenarioSpec::defaults(JobModel::Homogeneous);
    h.n = 6;
    h.bid_domain = bid_grid(8);
    h.budget = ratio(8, 1);
    h.instances = 200;
    h.seed = 201;

    let mut het = ScenarioSpec::defaults(JobModel::Heterogeneous);
    het.n = 6;
    het.bid_domain = bid_grid(8);
    het.limit_domain = vec![1, 2, 3];
    het.budget = ratio(16, 1);
    het.instances = 200;
    het.seed = 202;

    let mut sub = ScenarioSpec::defaults(JobModel::Submodular);
    sub.n = 6;
    sub.m = 5;
    sub.bid_domain = bid_grid(8);
    sub.budget = ratio(6, 1);
    sub.instances = 200;
    sub.seed = 203;

    vec![h, het, sub]
}

struct Scorecard {
    failures: Vec<String>,
}

impl Scorecard {
    fn report(&mut self, criterion: u32, name: &str, ok: bool, detail: String) {
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {criterion} ({name}): {verdict} — {detail}");
        if !ok {
            self.failures.push(format!("criterion {criterion} ({name}): {detail}"));
        }
    }
}

fn criterion_1(card: &mut Scorecard, reports: &[EquivalenceReport]) {
    let total: u64 = reports.iter().map(|r| r.instances).sum();
    let matched: u64 = reports.iter().map(|r| r.matches).sum();
    let mismatches: usize = reports.iter().map(|r| r.mismatches.len()).sum();
    card.report(
        1,
        "outcome equivalence",
        matched == total && mismatches == 0,
        format!("{matched}/{total} exact oracle matches"),
    );
}

fn criterion_2(card: &mut Scorecard) {
    let start = Instant::now();
    let mut deviations = 0;
    let mut violations = Vec::new();
    for spec in truthfulness_specs() {
        let r = run_truthfulness(&spec).unwrap();
        deviations += r.deviations_checked;
        violations.extend(r.violations);
    }
    let elapsed = start.elapsed();
    let in_budget = elapsed < Duration::from_secs(120);
    card.report(
        2,
        "truthfulness",
        violations.is_empty() && in_budget,
        format!(
            "{deviations} deviations, {} profitable, {:.1}s (budget 120s){}",
            violations.len(),
            elapsed.as_secs_f64(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    );
}

fn criterion_3(card: &mut Scorecard, reports: &[EquivalenceReport]) {
    // Criterion-1 outcomes: feasibility was checked inline per instance.
    let mut violations: Vec<String> = reports
        .iter()
        .flat_map(|r| r.feasibility_violations.iter().cloned())
        .collect();
    // Criterion-2 outcomes: check the truthful and every deviated outcome.
    let mut outcomes = 0u64;
    for spec in truthfulness_specs() {
        for i in 0..spec.instances {
            let mut rng = derive_rng(spec.seed, &format!("tr-{i}"));
            let mut profiles = Vec::new();
            for u in 0..spec.n {
                profiles.push(pvi_core::harness::gen::gen_profile(&spec, UserId(u), &mut rng));
            }
            let cfg = spec.to_config(i + 1);
            violations.extend(feasibility_check(&cfg, &profiles, &oracle_outcome(&cfg, &profiles)));
            outcomes += 1;
            for idx in 0..profiles.len() {
                for bid in &spec.bid_domain {
                    if bid == &profiles[idx].bid {
                        continue;
                    }
                    let mut deviated = profiles.clone();
                    deviated[idx].bid = bid.clone();
                    let out = oracle_outcome(&cfg, &deviated);
                    violations.extend(feasibility_check(&cfg, &deviated, &out));
                    outcomes += 1;
                }
            }
        }
    }
    card.report(
        3,
        "budget feasibility + individual rationality",
        violations.is_empty(),
        format!(
            "0 tolerance over criterion-1 runs and {outcomes} criterion-2 outcomes; {} violations{}",
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    );
}

fn criterion_4(card: &mut Scorecard) {
    let mut rng = derive_rng(41, "acceptance-crypto");
    let mut bad = Vec::new();

    // 10^4 Paillier add/scale trials against plaintext arithmetic.
    let pk = paillier_keygen(512, &mut rng).unwrap();
    for t in 0..10_000u32 {
        let m1 = rng.gen_biguint_below(&pk.n);
        let m2 = rng.gen_biguint_below(&pk.n);
        let k = BigUint::from(rng.gen_range(0u64..=u32::MAX as u64));
        let e1 = pk.encrypt_rng(&m1, &mut rng).unwrap();
        let e2 = pk.encrypt_rng(&m2, &mut rng).unwrap();
        let sum = pk.decrypt(&paillier_add(&e1, &e2, &pk).unwrap()).unwrap();
        let prod = pk.decrypt(&paillier_scale(&e1, &k, &pk).unwrap()).unwrap();
        if sum != (&m1 + &m2) % &pk.n || prod != (&m1 * &k) % &pk.n {
            bad.push(format!("paillier trial {t}"));
        }
    }

    // 10^3 OT trials return exactly the chosen message.
    let group = GroupParams::generate(512, 160, &mut rng).unwrap();
    for t in 0..1_000u32 {
        let z = rng.gen_range(2..=6usize);
        let msgs: Vec<BigUint> = (0..z)
            .map(|_| rng.gen_biguint_range(&BigUint::one(), &group.p))
            .collect();
        let choice = rng.gen_range(1..=z);
        if ot_transfer(&group, &msgs, choice, &mut rng).unwrap() != msgs[choice - 1] {
            bad.push(format!("ot trial {t}"));
        }
    }

    // 10^3 blind signatures verify, and fail under single-bit tampering.
    let signer = SignerKey::generate(&group, &mut rng);
    for t in 0..1_000u32 {
        let m = rng.gen_biguint_range(&BigUint::one(), &group.p);
        let (sig, _) = blind_sign(&group, &signer, &m, &mut rng).unwrap();
        if !verify(&group, &signer.y, &m, &sig) {
            bad.push(format!("blind-sig trial {t} did not verify"));
        }
        let mut tampered = sig.clone();
        if t % 2 == 0 {
            let bit = rng.gen_range(0..tampered.s.bits().max(1));
            tampered.s = &tampered.s ^ (BigUint::one() << bit);
        } else {
            let bit = rng.gen_range(0..tampered.r.bits().max(1));
            tampered.r = &tampered.r ^ (BigUint::one() << bit);
        }
        if verify(&group, &signer.y, &m, &tampered) {
            bad.push(format!("blind-sig trial {t} verified after bit flip"));
        }
    }

    card.report(
        4,
        "crypto identities",
        bad.is_empty(),
        format!(
            "10^4 paillier add/scale, 10^3 ot, 10^3 blind-sig (+tamper) trials; {} failures{}",
            bad.len(),
            bad.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    );
}

fn criterion_5(card: &mut Scorecard) {
    let start = Instant::now();
    let gain = ratio(100, 1);
    let policy = |alpha: BigRational| VerificationPolicy {
        alpha,
        fine: ratio(900, 1),
        p_max: ratio(100, 1),
    };
    // α = 0.1 is the deterrence boundary: mean within 3 stderr of 0 and
    // not significantly positive.
    let boundary = cheating_game(&policy(ratio(1, 10)), &gain, 100_000, 51).unwrap();
    let boundary_ok = boundary.consistent_with_expected(3.0)
        && boundary.mean <= 3.0 * boundary.stderr
        && boundary.expected == ratio(0, 1);
    // α = 0.05: closed-form expectation +50.
    let weak = cheating_game(&policy(ratio(1, 20)), &gain, 100_000, 52).unwrap();
    let weak_ok = weak.consistent_with_expected(3.0) && weak.expected == ratio(50, 1);
    let elapsed = start.elapsed();
    card.report(
        5,
        "verification game",
        boundary_ok && weak_ok && elapsed < Duration::from_secs(30),
        format!(
            "alpha 1/10 mean {:.3}±{:.3} (expect 0), alpha 1/20 mean {:.3}±{:.3} (expect 50), {:.1}s (budget 30s)",
            boundary.mean, boundary.stderr, weak.mean, weak.stderr,
            elapsed.as_secs_f64()
        ),
    );
}

fn criterion_6(card: &mut Scorecard) {
    // 100 injected underpayment faults, each flagged by an auditing winner.
    let mut bad = Vec::new();
    let mut flagged = 0u32;
    for model in [JobModel::Homogeneous, JobModel::Submodular] {
        let mut spec = ScenarioSpec::defaults(model);
        spec.crypto = CryptoConfig::small();
        spec.n = 5;
        spec.m = 4;
        spec.seed = 61;
        let suite = campaign_suite(&spec).unwrap();
        let mut injected = 0u32;
        let mut attempt = 0u64;
        while injected < 50 {
            attempt += 1;
            assert!(attempt < 500, "instance generator starved of winners");
            let mut rng = derive_rng(spec.seed, &format!("fault-{attempt}"));
            let profiles: Vec<_> = (0..spec.n)
                .map(|u| pvi_core::harness::gen::gen_profile(&spec, UserId(u), &mut rng))
                .collect();
            let cfg = spec.to_config(attempt);
            if oracle_outcome(&cfg, &profiles).winners.is_empty() {
                continue;
            }
            injected += 1;
            let opts = RunOptions {
                misbehavior: Misbehavior::Underpay {
                    victim: None, // first winner
                    delta: ratio(1, 4),
                },
                suite: Some(Arc::clone(&suite)),
                force_audit: (0..spec.n).map(UserId).collect(),
                skip_coin_audits: true,
            };
            let t = match model {
                JobModel::Submodular => run_pvi_s_opts(&cfg, &profiles, opts).unwrap(),
                _ => run_pvi_h_opts(&cfg, &profiles, opts).unwrap(),
            };
            let winners: BTreeSet<UserId> = t.outcome.winners.iter().copied().collect();
            let discrepancies: Vec<&UserId> = t
                .audits
                .iter()
                .filter(|a| matches!(a.finding, AuditFinding::Discrepancy { .. }))
                .map(|a| &a.user)
                .collect();
            if discrepancies.len() == 1 && winners.contains(discrepancies[0]) {
                flagged += 1;
            } else {
                bad.push(format!(
                    "{} fault {attempt}: {} discrepancies",
                    cfg.model.tag(),
                    discrepancies.len()
                ));
            }
        }
    }
    // Audit frequency over 10^4 runs matches alpha within 3σ binomial.
    let alpha = ratio(1, 10);
    let hits = (0..10_000u64)
        .filter(|tid| audit_coin(62, *tid, UserId(0), &alpha))
        .count() as f64;
    let sigma = (10_000.0f64 * 0.1 * 0.9).sqrt();
    let coin_ok = (hits - 1_000.0).abs() <= 3.0 * sigma;
    card.report(
        6,
        "fault detection",
        flagged == 100 && bad.is_empty() && coin_ok,
        format!(
            "{flagged}/100 faults flagged; audit coin {hits}/10000 at alpha 1/10 (3σ = {:.0}){}",
            3.0 * sigma,
            bad.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    );
}

fn criterion_7(card: &mut Scorecard, reports: &[EquivalenceReport]) {
    // secrecy_scan runs on every criterion-1 transcript: cross-user
    // plaintext leaks, pre-release decommitments, and (for ranked runs)
    // the identity-free failing-rank record are all checked there.
    let violations: Vec<&String> = reports
        .iter()
        .flat_map(|r| r.secrecy_violations.iter())
        .collect();
    card.report(
        7,
        "secrecy structure",
        violations.is_empty(),
        format!(
            "party-view scans over all criterion-1 runs; {} violations{}",
            violations.len(),
            violations.first().map(|v| format!("; first: {v}")).unwrap_or_default()
        ),
    );
}

fn criterion_8(card: &mut Scorecard) {
    let mut spec = ScenarioSpec::defaults(JobModel::Homogeneous);
    spec.crypto = CryptoConfig::small();
    spec.n = 25;
    spec.sweep = vec![25, 50, 100, 200];
    spec.seed = 81;
    let report = run_overhead(&spec).unwrap();
    let slopes_ok = (report.platform_send_slope - 1.0).abs() <= 0.3
        && (report.user_sort_slope - 2.0).abs() <= 0.3
        && report.counters_conserved;

    // Sanity budget: one full 512-bit submodular run at n=100, m=50.
    let mut big = ScenarioSpec::defaults(JobModel::Submodular);
    big.n = 100;
    big.m = 50;
    big.budget = ratio(40, 1);
    big.bid_domain = bid_grid(4);
    big.seed = 82;
    let start = Instant::now();
    let (t, _) = run_single(&big).unwrap();
    let elapsed = start.elapsed();
    let big_ok = elapsed < Duration::from_secs(60) && !t.outcome.winners.is_empty();
    card.report(
        8,
        "overhead scaling",
        slopes_ok && big_ok,
        format!(
            "platform send slope {:.2} (1±0.3), sort slope {:.2} (2±0.3), conserved {}; n=100 m=50 512-bit run {:.1}s (budget 60s)",
            report.platform_send_slope,
            report.user_sort_slope,
            report.counters_conserved,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn acceptance() {
    let mut card = Scorecard { failures: Vec::new() };

    // Criterion-1 campaigns feed criteria 3 and 7 as well.
    let start = Instant::now();
    let reports: Vec<EquivalenceReport> = equivalence_specs()
        .iter()
        .map(|s| run_equivalence(s).unwrap())
        .collect();
    let c1_elapsed = start.elapsed();
    criterion_1(&mut card, &reports);
    assert!(
        c1_elapsed < Duration::from_secs(300),
        "criterion 1 runtime {:.1}s exceeds the 5-minute budget",
        c1_elapsed.as_secs_f64()
    );

    criterion_2(&mut card);
    criterion_3(&mut card, &reports);
    criterion_4(&mut card);
    criterion_5(&mut card);
    criterion_6(&mut card);
    criterion_7(&mut card, &reports);
    criterion_8(&mut card);

    assert!(
        card.failures.is_empty(),
        "failed criteria:\n{}",
        card.failures.join("\n")
    );
}
