//! Benchmarks for block creation, challenge validation, Merkle roots and
//! ledger storage.
//!
//! Every timed point is the mean and sample standard deviation of
//! [`RUNS`] independent runs. Setup (key generation, signing of the inputs)
//! is excluded from the timed region. Create and challenge points time the
//! whole batch of `n` vehicles, so the series grows with fleet size; divide
//! by `n` for a per-transaction figure.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::crypto::{derive_seed, generate_keypair, Digest, KeyPair};
use crate::ecu::{compute_ssid, EcuState};
use crate::ledger::Ledger;
use crate::protocol::{self, Challenge, UpperTier};
use crate::tx::{ChallengeRecord, ChallengeResponse, Genesis};

pub const RUNS: usize = 10;
pub const DEFAULT_VEHICLE_COUNTS: [usize; 5] = [10, 50, 100, 150, 200];
pub const DEFAULT_ECU_COUNTS: [usize; 6] = [10, 200, 400, 600, 800, 1000];
pub const DEFAULT_BLOCK_COUNTS: [usize; 4] = [1_000, 10_000, 50_000, 100_000];
/// Registered vehicles in New South Wales, the storage projection target.
pub const PROJECTED_BLOCKS: u64 = 5_600_000;
const STORAGE_ECUS: usize = 8;
/// Merkle roots are fast enough that one root is below timer resolution at
/// small sizes; each run times this many and reports the per-root mean.
const MERKLE_REPS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bench {
    Create,
    Challenge,
    Merkle,
    Storage,
}

impl Bench {
    /// Name of the x column in output files.
    pub fn x_name(self) -> &'static str {
        match self {
            Bench::Create | Bench::Challenge => "vehicles",
            Bench::Merkle => "ecus",
            Bench::Storage => "blocks",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub x: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoragePoint {
    pub blocks: u64,
    pub bytes: u64,
    /// False for the extrapolated point.
    pub measured: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl LinearFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Ordinary least squares. R² is 1 when y is constant and the fit is exact.
pub fn linear_fit(points: &[(f64, f64)]) -> LinearFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    LinearFit {
        slope,
        intercept,
        r2,
    }
}

/// Mean and sample (n − 1) standard deviation.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub bench: Bench,
    pub runs: usize,
    pub series: Vec<SeriesPoint>,
    pub storage: Vec<StoragePoint>,
}

impl MetricsReport {
    pub fn fit(&self) -> LinearFit {
        match self.bench {
            Bench::Storage => linear_fit(
                &self
                    .storage
                    .iter()
                    .filter(|p| p.measured)
                    .map(|p| (p.blocks as f64, p.bytes as f64))
                    .collect::<Vec<_>>(),
            ),
            _ => linear_fit(
                &self
                    .series
                    .iter()
                    .map(|p| (p.x as f64, p.mean_ms))
                    .collect::<Vec<_>>(),
            ),
        }
    }

    pub fn projected_bytes(&self) -> Option<u64> {
        self.storage.iter().find(|p| !p.measured).map(|p| p.bytes)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        if self.bench == Bench::Storage {
            s.push_str("blocks,bytes,kind\n");
            for p in &self.storage {
                let kind = if p.measured { "measured" } else { "projected" };
                s.push_str(&format!("{},{},{kind}\n", p.blocks, p.bytes));
            }
        } else {
            s.push_str(&format!("{},mean_ms,stddev_ms\n", self.bench.x_name()));
            for p in &self.series {
                s.push_str(&format!("{},{:.6},{:.6}\n", p.x, p.mean_ms, p.stddev_ms));
            }
        }
        s
    }

    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = if self.bench == Bench::Storage {
            self.storage
                .iter()
                .map(|p| {
                    json!({
                        "blocks": p.blocks,
                        "bytes": p.bytes,
                        "kind": if p.measured { "measured" } else { "projected" },
                    })
                })
                .collect()
        } else {
            self.series
                .iter()
                .map(|p| {
                    let mut m = serde_json::Map::new();
                    m.insert(self.bench.x_name().into(), json!(p.x));
                    m.insert("mean_ms".into(), json!(p.mean_ms));
                    m.insert("stddev_ms".into(), json!(p.stddev_ms));
                    Value::Object(m)
                })
                .collect()
        };
        let mut out = serde_json::to_string_pretty(&rows).expect("plain values");
        out.push('\n');
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub seed: u64,
    /// Worker threads for the repetitions of one point. Each run still
    /// times only its own work.
    pub threads: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: 1,
        }
    }
}

/// Runs `run(i)` for `i in 0..RUNS`, sharded over `threads`, and returns
/// the per-run milliseconds in run order.
fn repeat<F>(threads: usize, run: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync,
{
    let threads = threads.clamp(1, RUNS);
    if threads == 1 {
        return (0..RUNS).map(run).collect();
    }
    let mut out = vec![0.0; RUNS];
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let run = &run;
                s.spawn(move || {
                    (t..RUNS)
                        .step_by(threads)
                        .map(|i| (i, run(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, ms) in h.join().expect("bench worker panicked") {
                out[i] = ms;
            }
        }
    });
    out
}

fn point(x: usize, samples: &[f64]) -> SeriesPoint {
    let (mean_ms, stddev_ms) = mean_stddev(samples);
    SeriesPoint {
        x,
        mean_ms,
        stddev_ms,
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Fleet {
    maker: KeyPair,
    validators: Vec<KeyPair>,
    vehicles: Vec<(KeyPair, EcuState)>,
}

fn fleet(n: usize, ecus: usize, seed: u64) -> Fleet {
    let key = |label: &str, i: usize| generate_keypair(derive_seed(label, seed, i as u64));
    let vehicles = (0..n)
        .map(|v| {
            let digests: Vec<_> = (0..ecus)
                .map(|e| crate::crypto::hash(format!("v{v}/ecu{e}").as_bytes()))
                .collect();
            (
                key("vehicle", v),
                EcuState::from_digests(&digests, 0).expect("ecus > 0"),
            )
        })
        .collect();
    Fleet {
        maker: key("maker", 0),
        validators: vec![key("authority/transport", 0), key("authority/legal", 0)],
        vehicles,
    }
}

impl Fleet {
    fn geneses(&self) -> Vec<Genesis> {
        self.vehicles
            .iter()
            .map(|(k, s)| protocol::make_genesis(&self.maker, k.public(), s, 0))
            .collect()
    }

    fn tiers(&self) -> (UpperTier, Ledger) {
        let mut upper = UpperTier::new(self.validators.clone(), 0);
        upper.authorized_maintainers.insert(self.maker.public());
        (upper, Ledger::new())
    }
}

/// Time for the validators to verify and open blocks for `n` genesis
/// transactions.
pub fn bench_create(counts: &[usize], opts: BenchOptions) -> MetricsReport {
    let series = counts
        .iter()
        .map(|&n| {
            let fleet = fleet(n, STORAGE_ECUS, opts.seed);
            let geneses = fleet.geneses();
            let samples = repeat(opts.threads, |_| {
                let (mut upper, mut lower) = fleet.tiers();
                let inputs = geneses.clone();
                let start = Instant::now();
                for (i, g) in inputs.into_iter().enumerate() {
                    protocol::initialize_vehicle(
                        &mut upper,
                        &mut lower,
                        g,
                        0,
                        &format!("cloud/v{i}"),
                    )
                    .expect("valid genesis");
                }
                elapsed_ms(start)
            });
            point(n, &samples)
        })
        .collect();
    MetricsReport {
        bench: Bench::Create,
        runs: RUNS,
        series,
        storage: Vec::new(),
    }
}

/// Time for RSUs to validate one challenge response from each of `n`
/// registered vehicles.
pub fn bench_challenge(counts: &[usize], opts: BenchOptions) -> MetricsReport {
    let series = counts
        .iter()
        .map(|&n| {
            let fleet = fleet(n, STORAGE_ECUS, opts.seed);
            let (mut upper, mut lower) = fleet.tiers();
            for (i, g) in fleet.geneses().into_iter().enumerate() {
                protocol::initialize_vehicle(
                    &mut upper,
                    &mut lower,
                    g,
                    0,
                    format!("cloud/v{i}").as_str(),
                )
                .expect("valid genesis");
            }
            let rsu = generate_keypair(derive_seed("rsu", opts.seed, 0));
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let rounds: Vec<(Challenge, ChallengeResponse)> = fleet
                .vehicles
                .iter()
                .map(|(k, s)| {
                    let c = protocol::issue_challenge(&rsu, k.public(), s.len(), 3, &mut rng, 10)
                        .expect("ecus > 0");
                    let r = protocol::build_response(k, s, &c, 11).expect("own challenge");
                    (c, r)
                })
                .collect();
            let samples = repeat(opts.threads, |_| {
                let start = Instant::now();
                for (c, r) in &rounds {
                    let v = protocol::verify_response(&lower, c, r);
                    assert!(v.is_valid(), "honest response rejected: {v}");
                }
                elapsed_ms(start)
            });
            point(n, &samples)
        })
        .collect();
    MetricsReport {
        bench: Bench::Challenge,
        runs: RUNS,
        series,
        storage: Vec::new(),
    }
}

/// Time to compute one SS_ID over `n` ECUs with random firmware digests.
pub fn bench_merkle(counts: &[usize], opts: BenchOptions) -> MetricsReport {
    let series = counts
        .iter()
        .map(|&n| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ n as u64);
            let digests: Vec<_> = (0..n).map(|_| Digest(rng.gen())).collect();
            let state = EcuState::from_digests(&digests, 0).expect("n > 0");
            let samples = repeat(opts.threads, |_| {
                let start = Instant::now();
                for _ in 0..MERKLE_REPS {
                    std::hint::black_box(
                        compute_ssid(std::hint::black_box(&state)).expect("n > 0"),
                    );
                }
                elapsed_ms(start) / MERKLE_REPS as f64
            });
            point(n, &samples)
        })
        .collect();
    MetricsReport {
        bench: Bench::Merkle,
        runs: RUNS,
        series,
        storage: Vec::new(),
    }
}

/// Grows one lower-tier ledger to the largest of `counts` vehicles in
/// steady state (a genesis plus one countersigned challenge record, the
/// most a pruned block ever holds) and returns its serialized size as it
/// passes each count, in ascending order.
pub fn materialize_storage(counts: &[usize], seed: u64) -> Vec<(usize, u64)> {
    let mut targets = counts.to_vec();
    targets.sort_unstable();
    targets.dedup();
    let maker = generate_keypair(derive_seed("maker", seed, 0));
    let rsu = generate_keypair(derive_seed("rsu", seed, 0));
    let subset: Vec<usize> = (0..3).collect();
    let mut lower = Ledger::new();
    let mut out = Vec::with_capacity(targets.len());
    let mut next = targets.iter().peekable();
    let max = targets.last().copied().unwrap_or(0);
    for i in 0..max {
        let k = generate_keypair(derive_seed("vehicle", seed, i as u64));
        let digests: Vec<_> = (0..STORAGE_ECUS)
            .map(|e| crate::crypto::hash(format!("v{i}/ecu{e}").as_bytes()))
            .collect();
        let s = EcuState::from_digests(&digests, 0).expect("ecus > 0");
        let g = protocol::make_genesis(&maker, k.public(), &s, 0);
        lower
            .create_block(k.public(), g, 0, format!("cloud/v{i}"))
            .expect("fresh key");
        let report = s.subset_report(&subset).expect("8 ecus");
        let response = ChallengeResponse::signed(&k, s.ssid(), report, 1000);
        lower
            .append(&k.public(), ChallengeRecord::signed(&rsu, response).into())
            .expect("block exists");
        if next.peek() == Some(&&(i + 1)) {
            next.next();
            out.push((i + 1, lower.serialized_size() as u64));
        }
    }
    out
}

/// Measures ledger size for each count and appends a linear projection to
/// [`PROJECTED_BLOCKS`].
pub fn bench_storage(counts: &[usize], opts: BenchOptions) -> MetricsReport {
    let mut storage: Vec<_> = materialize_storage(counts, opts.seed)
        .into_iter()
        .map(|(n, bytes)| StoragePoint {
            blocks: n as u64,
            bytes,
            measured: true,
        })
        .collect();
    let pts: Vec<_> = storage
        .iter()
        .map(|p| (p.blocks as f64, p.bytes as f64))
        .collect();
    let fit = match pts.as_slice() {
        // a single point: proportional, with the 4-byte envelope as intercept
        [(n, b)] => LinearFit {
            slope: (b - 4.0) / n,
            intercept: 4.0,
            r2: 1.0,
        },
        _ => linear_fit(&pts),
    };
    storage.push(StoragePoint {
        blocks: PROJECTED_BLOCKS,
        bytes: fit.at(PROJECTED_BLOCKS as f64).round().max(0.0) as u64,
        measured: false,
    });
    MetricsReport {
        bench: Bench::Storage,
        runs: RUNS,
        series: Vec::new(),
        storage,
    }
}
