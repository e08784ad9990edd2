//! Campaign drivers behind the CLI subcommands: oracle-equivalence sweeps
//! with privacy scans, exhaustive truthfulness search, the verification
//! game table, overhead scaling fits, and single-run artifact dumps.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::BigRational;

use crate::bulletin::{Party, PayloadTag};
use crate::error::Result;
use crate::harness::gen::{gen_instance, gen_profiles, instance_rng};
use crate::harness::scenario::{ratio_str, ScenarioSpec};
use crate::mechanisms::{
    run_heterogeneous, run_homogeneous, run_submodular, AuctionOutcome, CoverageUtility,
    SensingProfile, UserId,
};
use crate::protocol::{
    cheating_game, AuctionConfig, CryptoSuite, JobModel, LearnedLabel, RunOptions, RunTranscript,
    VerificationPolicy,
};
use crate::protocol::pvi_h::run_pvi_h_opts;
use crate::protocol::pvi_s::run_pvi_s_opts;

/// The plaintext mechanism the protocols must match exactly.
pub fn oracle_outcome(cfg: &AuctionConfig, profiles: &[SensingProfile]) -> AuctionOutcome {
    match cfg.model {
        JobModel::Homogeneous => run_homogeneous(profiles, &cfg.budget),
        JobModel::Heterogeneous => run_heterogeneous(profiles, &cfg.budget),
        JobModel::Submodular => {
            let utility =
                CoverageUtility::from_profiles((0..cfg.ground_set_size).collect(), profiles);
            run_submodular(profiles, &cfg.budget, &utility)
        }
    }
}

fn run_protocol(
    cfg: &AuctionConfig,
    profiles: &[SensingProfile],
    opts: RunOptions,
) -> Result<RunTranscript> {
    match cfg.model {
        JobModel::Submodular => run_pvi_s_opts(cfg, profiles, opts),
        _ => run_pvi_h_opts(cfg, profiles, opts),
    }
}

/// Pre-generate one key suite covering user ids 0..n for a whole campaign.
pub fn campaign_suite(spec: &ScenarioSpec) -> Result<Arc<CryptoSuite>> {
    let users: Vec<UserId> = (0..spec.n.max(spec.sweep.iter().copied().max().unwrap_or(0)))
        .map(UserId)
        .collect();
    Ok(Arc::new(CryptoSuite::generate(spec.seed, &users, &spec.crypto)?))
}

// ---------------------------------------------------------------- secrecy

/// Structural privacy scan over a transcript's party views. Returns a list
/// of violations (empty = clean):
/// - no user learns another user's plaintext bid/limit/assignments,
/// - the AI never learns any plaintext profile,
/// - the platform learns plaintext profiles only for winners,
/// - no decommitment before the key-release round,
/// - ranked-model runs keep the first failing rank identity-free and all
///   commitments length-uniform.
pub fn secrecy_scan(t: &RunTranscript) -> Vec<String> {
    let mut violations = Vec::new();
    let winners: BTreeSet<UserId> = t.outcome.winners.iter().copied().collect();
    for (party, view) in &t.views {
        for l in &view.learned {
            let owner = match &l.label {
                LearnedLabel::PlaintextBid { owner, .. }
                | LearnedLabel::PlaintextLimit { owner, .. }
                | LearnedLabel::PlaintextAssignments { owner } => Some(*owner),
                LearnedLabel::TlcOpened => {
                    if l.round < t.release_round {
                        violations.push(format!(
                            "{party} opened a commitment at round {} before release {}",
                            l.round, t.release_round
                        ));
                    }
                    None
                }
                _ => None,
            };
            let Some(owner) = owner else { continue };
            match party {
                Party::User(u) => {
                    if owner != Some(*u) {
                        violations.push(format!(
                            "user {u} learned a plaintext profile of {owner:?} at round {}",
                            l.round
                        ));
                    }
                }
                Party::Ai => violations.push(format!(
                    "AI learned a plaintext profile ({:?}) at round {}",
                    l.label, l.round
                )),
                Party::Platform => {
                    if let Some(u) = owner {
                        if !winners.contains(&u) {
                            violations.push(format!(
                                "platform learned non-winner {u}'s plaintext profile"
                            ));
                        }
                    }
                }
            }
        }
    }
    if t.config.model != JobModel::Submodular {
        ranked_anonymity_scan(t, &mut violations);
    }
    violations
}

/// Ranked-model anonymity: if some participant lost, the decoded record
/// just past the cut must be identity-free, and all commitments must be
/// syntactically indistinguishable (uniform length, platform-authored).
fn ranked_anonymity_scan(t: &RunTranscript, violations: &mut Vec<String>) {
    let participants = t.profiles.len() - t.excluded.len();
    let k = t.outcome.winners.len();
    if participants > 0 && t.commitment_len.is_none() {
        violations.push("no uniform commitment length recorded".into());
    }
    let commits = t
        .board
        .entries()
        .iter()
        .filter(|e| e.payload.tag == PayloadTag::Commitment)
        .count();
    if commits != participants {
        violations.push(format!(
            "{commits} commitments on the board for {participants} participants"
        ));
    }
    if k < participants {
        let platform = t.views.get(&Party::Platform);
        let failing_rank_anonymous = platform.is_some_and(|v| {
            v.learned.iter().any(|l| {
                matches!(
                    l.label,
                    LearnedLabel::PlaintextBid { owner: None, rank: Some(r) } if r == k as u32 + 1
                )
            })
        });
        if !failing_rank_anonymous {
            violations.push(format!("no identity-free record at failing rank {}", k + 1));
        }
        let failing_rank_claimed = platform.is_some_and(|v| {
            v.learned.iter().any(|l| {
                matches!(
                    l.label,
                    LearnedLabel::PlaintextBid { owner: Some(_), rank: Some(r) } if r == k as u32 + 1
                )
            })
        });
        if failing_rank_claimed {
            violations.push(format!("failing rank {} was linked to an identity", k + 1));
        }
    }
}

// ------------------------------------------------------------ equivalence

#[derive(Debug)]
pub struct EquivalenceReport {
    pub spec_echo: String,
    pub instances: u64,
    pub matches: u64,
    pub mismatches: Vec<u64>,
    pub secrecy_violations: Vec<String>,
    pub feasibility_violations: Vec<String>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
            && self.secrecy_violations.is_empty()
            && self.feasibility_violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "equivalence: {}/{} exact matches [{}]\n",
            self.matches, self.instances, self.spec_echo
        );
        for id in &self.mismatches {
            out.push_str(&format!("MISMATCH instance {id}\n"));
        }
        for v in &self.secrecy_violations {
            out.push_str(&format!("SECRECY {v}\n"));
        }
        for v in &self.feasibility_violations {
            out.push_str(&format!("FEASIBILITY {v}\n"));
        }
        out
    }
}

/// Budget feasibility and individual rationality of an outcome (exact).
pub fn feasibility_check(
    cfg: &AuctionConfig,
    profiles: &[SensingProfile],
    outcome: &AuctionOutcome,
) -> Vec<String> {
    let mut violations = Vec::new();
    if outcome.total_paid() > cfg.budget {
        violations.push(format!(
            "instance {}: total paid {} exceeds budget {}",
            cfg.tid,
            ratio_str(&outcome.total_paid()),
            ratio_str(&cfg.budget)
        ));
    }
    for w in &outcome.winners {
        let profile = profiles.iter().find(|p| p.user_id == *w).unwrap();
        let jobs = outcome.allocation.get(w).copied().unwrap_or(0);
        let cost = &profile.bid * BigRational::from_integer(BigInt::from(jobs));
        if outcome.payment_of(*w) < cost {
            violations.push(format!(
                "instance {}: winner {w} paid {} below cost {}",
                cfg.tid,
                ratio_str(&outcome.payment_of(*w)),
                ratio_str(&cost)
            ));
        }
    }
    violations
}

/// Run `spec.instances` random instances through the protocol and the
/// plaintext oracle; record mismatches, privacy violations, and budget or
/// rationality violations.
pub fn run_equivalence(spec: &ScenarioSpec) -> Result<EquivalenceReport> {
    let suite = campaign_suite(spec)?;
    let mut report = EquivalenceReport {
        spec_echo: spec.echo(),
        instances: spec.instances,
        matches: 0,
        mismatches: Vec::new(),
        secrecy_violations: Vec::new(),
        feasibility_violations: Vec::new(),
    };
    for i in 0..spec.instances {
        let profiles = gen_instance(spec, "eq", i);
        let cfg = spec.to_config(i + 1);
        let opts = RunOptions {
            suite: Some(Arc::clone(&suite)),
            skip_coin_audits: true,
            ..RunOptions::default()
        };
        let t = run_protocol(&cfg, &profiles, opts)?;
        if t.outcome == oracle_outcome(&cfg, &profiles) {
            report.matches += 1;
        } else {
            report.mismatches.push(i);
        }
        report.secrecy_violations.extend(secrecy_scan(&t));
        report
            .feasibility_violations
            .extend(feasibility_check(&cfg, &profiles, &t.outcome));
    }
    Ok(report)
}

// ----------------------------------------------------------- truthfulness

#[derive(Debug)]
pub struct TruthfulnessReport {
    pub spec_echo: String,
    pub instances: u64,
    pub deviations_checked: u64,
    /// Verbatim profitable-deviation counterexamples.
    pub violations: Vec<String>,
}

impl TruthfulnessReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "truthfulness: {} deviations over {} instances, {} profitable [{}]\n",
            self.deviations_checked,
            self.instances,
            self.violations.len(),
            self.spec_echo
        );
        for v in &self.violations {
            out.push_str(&format!("PROFITABLE-DEVIATION {v}\n"));
        }
        out
    }
}

fn user_utility(p: &SensingProfile, outcome: &AuctionOutcome) -> BigRational {
    let jobs = outcome.allocation.get(&p.user_id).copied().unwrap_or(0);
    outcome.payment_of(p.user_id) - &p.bid * BigRational::from_integer(BigInt::from(jobs))
}

/// Exhaustive bid-deviation search on the exact mechanism (the protocol is
/// outcome-equivalent, so mechanism truthfulness transfers).
pub fn run_truthfulness(spec: &ScenarioSpec) -> Result<TruthfulnessReport> {
    let mut report = TruthfulnessReport {
        spec_echo: spec.echo(),
        instances: spec.instances,
        deviations_checked: 0,
        violations: Vec::new(),
    };
    for i in 0..spec.instances {
        let mut rng = instance_rng(spec, "tr", i);
        let profiles = gen_profiles(spec, spec.n, &mut rng);
        let cfg = spec.to_config(i + 1);
        let truthful = oracle_outcome(&cfg, &profiles);
        for (idx, p) in profiles.iter().enumerate() {
            let honest = user_utility(p, &truthful);
            for bid in &spec.bid_domain {
                if bid == &p.bid {
                    continue;
                }
                let mut deviated = profiles.clone();
                deviated[idx].bid = bid.clone();
                let outcome = oracle_outcome(&cfg, &deviated);
                // Utility is still priced at the true cost.
                let utility = user_utility(p, &AuctionOutcome {
                    winners: outcome.winners.clone(),
                    allocation: outcome.allocation.clone(),
                    payments: outcome.payments.clone(),
                    per_job_price: outcome.per_job_price.clone(),
                });
                report.deviations_checked += 1;
                if utility > honest {
                    report.violations.push(format!(
                        "instance {i} user {} true {} dev {} utility {} > {} profiles {:?}",
                        p.user_id,
                        ratio_str(&p.bid),
                        ratio_str(bid),
                        ratio_str(&utility),
                        ratio_str(&honest),
                        profiles
                    ));
                }
            }
        }
    }
    Ok(report)
}

// ------------------------------------------------------------------ game

#[derive(Debug)]
pub struct GameRow {
    pub alpha: BigRational,
    pub fine: BigRational,
    pub p_max: BigRational,
    pub gain: BigRational,
    pub mean: f64,
    pub stderr: f64,
    pub expected: BigRational,
    pub deterrent: bool,
}

#[derive(Debug)]
pub struct GameReport {
    pub trials: u64,
    pub rows: Vec<GameRow>,
}

impl GameReport {
    /// Every policy satisfying the deterrence condition must yield a
    /// nonpositive mean (within Monte Carlo noise).
    pub fn passed(&self) -> bool {
        self.rows
            .iter()
            .all(|r| !r.deterrent || r.mean <= 3.0 * r.stderr.max(f64::EPSILON))
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "verification game, {} trials per row\nalpha,fine,p_max,gain,mean,stderr,expected,deterrent\n",
            self.trials
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.4},{:.4},{},{}\n",
                ratio_str(&r.alpha),
                ratio_str(&r.fine),
                ratio_str(&r.p_max),
                ratio_str(&r.gain),
                r.mean,
                r.stderr,
                ratio_str(&r.expected),
                r.deterrent
            ));
        }
        out
    }
}

/// Tabulate the cheating game over a grid of audit probabilities.
pub fn run_game(alphas: &[BigRational], trials: u64, seed: u64) -> Result<GameReport> {
    let fine = BigRational::from_integer(BigInt::from(900));
    let p_max = BigRational::from_integer(BigInt::from(100));
    let gain = p_max.clone();
    let mut rows = Vec::new();
    for alpha in alphas {
        let policy = VerificationPolicy {
            alpha: alpha.clone(),
            fine: fine.clone(),
            p_max: p_max.clone(),
        };
        let stats = cheating_game(&policy, &gain, trials, seed)?;
        rows.push(GameRow {
            alpha: alpha.clone(),
            fine: fine.clone(),
            p_max: p_max.clone(),
            gain: gain.clone(),
            mean: stats.mean,
            stderr: stats.stderr,
            expected: stats.expected,
            deterrent: policy.deterrence_holds(),
        });
    }
    Ok(GameReport { trials, rows })
}

// -------------------------------------------------------------- overhead

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|&(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Deterministic counters CSV: one row per (party, phase), fractions and
/// counts only — no wall time.
pub fn counters_csv(scenario: &str, t: &RunTranscript) -> String {
    let mut out = String::from(
        "scenario,party,phase,messages,bytes,modexp,paillier_enc,paillier_dec,signs,verifies,sort_cmp,compares,ot_transfers\n",
    );
    for ((party, phase), c) in &t.counts {
        out.push_str(&format!(
            "{scenario},{party},{},{},{},{},{},{},{},{},{},{},{}\n",
            phase.name().replace(' ', "-"),
            c.messages,
            c.bytes,
            c.modexp,
            c.paillier_enc,
            c.paillier_dec,
            c.signs,
            c.verifies,
            c.sort_cmp,
            c.compares,
            c.ot_transfers
        ));
    }
    out
}

#[derive(Debug)]
pub struct OverheadReport {
    pub spec_echo: String,
    pub csv: String,
    /// ln-ln slope of platform winner-phase bytes sent vs n.
    pub platform_send_slope: f64,
    /// ln-ln slope of the audited user's sorting comparisons vs n.
    pub user_sort_slope: f64,
    /// Σ per-party bytes equals Σ per-message bytes in every run.
    pub counters_conserved: bool,
}

impl OverheadReport {
    pub fn passed(&self) -> bool {
        self.counters_conserved
            && (self.platform_send_slope - 1.0).abs() <= 0.3
            && (self.user_sort_slope - 2.0).abs() <= 0.3
    }

    pub fn render(&self) -> String {
        format!(
            "overhead [{}]\nplatform send bytes vs n: slope {:.3} (expect ~1)\nuser sort comparisons vs n: slope {:.3} (expect ~2)\ncounters conserved: {}\n{}",
            self.spec_echo,
            self.platform_send_slope,
            self.user_sort_slope,
            self.counters_conserved,
            self.csv
        )
    }
}

/// Sweep the user count, always auditing user 0 so the sorting-cost shape
/// shows up in the verification-phase counters.
pub fn run_overhead(spec: &ScenarioSpec) -> Result<OverheadReport> {
    let suite = campaign_suite(spec)?;
    let mut csv = String::new();
    let mut send_pts = Vec::new();
    let mut sort_pts = Vec::new();
    let mut conserved = true;
    for (k, &n) in spec.sweep.iter().enumerate() {
        let mut rng = instance_rng(spec, "ovh", n as u64);
        let profiles = gen_profiles(spec, n, &mut rng);
        let cfg = spec.to_config(1000 + k as u64);
        let opts = RunOptions {
            suite: Some(Arc::clone(&suite)),
            force_audit: vec![UserId(0)],
            skip_coin_audits: true,
            ..RunOptions::default()
        };
        let t = run_protocol(&cfg, &profiles, opts)?;
        conserved &= t.counts_total().bytes == t.total_bytes();
        let scenario = format!("n{n}");
        let table = counters_csv(&scenario, &t);
        if k == 0 {
            csv.push_str(&table);
        } else {
            // skip the repeated header
            csv.push_str(table.split_once('\n').map(|x| x.1).unwrap_or(""));
        }
        let platform_bytes = t
            .counts
            .get(&(Party::Platform, crate::protocol::Phase::WinnerSelection))
            .map(|c| c.bytes)
            .unwrap_or(0);
        let sort = t
            .counts
            .get(&(Party::User(UserId(0)), crate::protocol::Phase::Verification))
            .map(|c| c.sort_cmp)
            .unwrap_or(0);
        send_pts.push((n as f64, platform_bytes as f64));
        sort_pts.push((n as f64, sort as f64));
    }
    Ok(OverheadReport {
        spec_echo: spec.echo(),
        csv,
        platform_send_slope: loglog_slope(&send_pts),
        user_sort_slope: loglog_slope(&sort_pts),
        counters_conserved: conserved,
    })
}

// ------------------------------------------------------------ single run

#[derive(Debug)]
pub struct RunArtifacts {
    pub board: String,
    pub counters: String,
    pub outcome: String,
    /// Wall-clock notes; separate from the deterministic artifacts.
    pub timing: String,
}

pub fn render_outcome(t: &RunTranscript) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "model {} budget {} users {}\n",
        t.config.model.tag(),
        ratio_str(&t.config.budget),
        t.profiles.len()
    ));
    for w in &t.outcome.winners {
        out.push_str(&format!(
            "winner {} jobs {} payment {}\n",
            w,
            t.outcome.allocation.get(w).copied().unwrap_or(0),
            ratio_str(&t.outcome.payment_of(*w))
        ));
    }
    if let Some(price) = &t.outcome.per_job_price {
        out.push_str(&format!("per-job price {}\n", ratio_str(price)));
    }
    out.push_str(&format!("total paid {}\n", ratio_str(&t.outcome.total_paid())));
    for a in &t.audits {
        out.push_str(&format!("audit {} {:?}\n", a.user, a.finding));
    }
    out
}

/// One full run with coin audits enabled; returns the transcript plus its
/// textual artifacts (board dump, counters CSV, outcome, timing).
pub fn run_single(spec: &ScenarioSpec) -> Result<(RunTranscript, RunArtifacts)> {
    let start = Instant::now();
    let mut rng = instance_rng(spec, "run", 0);
    let profiles = gen_profiles(spec, spec.n, &mut rng);
    let cfg = spec.to_config(1);
    let t = run_protocol(&cfg, &profiles, RunOptions::default())?;
    let elapsed = start.elapsed();
    let artifacts = RunArtifacts {
        board: t.board.dump(),
        counters: counters_csv("run", &t),
        outcome: render_outcome(&t),
        timing: format!(
            "wall_time_ms {}\nmessages {}\nbytes {}\n",
            elapsed.as_millis(),
            t.messages.len(),
            t.total_bytes()
        ),
    };
    Ok((t, artifacts))
}
