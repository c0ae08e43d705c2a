//! Acceptance criteria, one line per criterion.
//!
//! Runs as a plain binary (no libtest harness) so that the result lines
//! always reach stdout; exits non-zero when any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gramlab::metrics::{d_h, gram_sqrt_dist};
use gramlab::moments::{second_moment, skew_defect, skew_pair_witness};
use gramlab::priors::{local_affine_chart, AffineChart, LinearPrior, ManifoldPrior, ParamSet, Prior};
use gramlab::real::{gaussian_matrix, seeded_rng, task_rng};
use gramlab::recovery::{
    extract_gram, gram_misfit, gram_misfit_gradient, noise_stability_experiment, population_moment,
    recover_from_gram, relative_error, sample_complexity_experiment, signal_to_blocks, GroupAction,
    RecoveryOptions,
};
use gramlab::repspec::cryoem_k;
use gramlab::signal::{apply_group, haar_sample, Signal};
use gramlab::stability::{
    c_constant, counterexample_affine_plane, counterexample_line_segment, hull_transversality_check,
    lipschitz_ratio, plane_prior, segment_prior, tangency_operator, transversality_search_linear, VerdictKind,
};
use gramlab::RepSpec;
use nalgebra::DVector;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn k_cross_check() -> Outcome {
    let t = Instant::now();
    let mut bad = Vec::new();
    for l in 0..=8 {
        for r in 2 * l + 1..=2 * l + 10 {
            let k = RepSpec::cryoem(l, r).unwrap().effective_dim();
            if cryoem_k(l, r).unwrap() != k {
                bad.push(format!("cryo L={l} R={r}"));
            }
        }
    }
    for n in (2..=64).step_by(2) {
        if RepSpec::zn(n).unwrap().effective_dim() != (n / 2 + 1) as u64 {
            bad.push(format!("Z_{n}"));
        }
    }
    for n in 1..=10 {
        if RepSpec::new(vec![(n, 1)]).unwrap().effective_dim() != 1 {
            bad.push(format!("single irreducible N={n}"));
        }
    }
    let el = t.elapsed();
    outcome(
        bad.is_empty() && within(el, 1.0),
        format!("mismatches {:?}, {:.3}s", bad, el.as_secs_f64()),
    )
}

fn sandwich() -> Outcome {
    let t = Instant::now();
    let specs: Vec<RepSpec> = vec![
        RepSpec::zn(8).unwrap(),
        RepSpec::new(vec![(3, 2), (1, 3)]).unwrap(),
        RepSpec::new(vec![(2, 4)]).unwrap(),
        RepSpec::cryoem(1, 3).unwrap(),
        RepSpec::new(vec![(5, 2), (2, 1), (1, 1)]).unwrap(),
        RepSpec::new(vec![(4, 4), (1, 2)]).unwrap(),
    ];
    let per_spec = 10_000usize.div_ceil(specs.len());
    let mut violations = 0;
    let mut total = 0;
    for (s_i, spec) in specs.iter().enumerate() {
        for i in 0..per_spec {
            let mut r = task_rng(2024 + s_i as u64, i as u64);
            let x = Signal::<f64>::random(spec, &mut r);
            let y = if i % 5 == 0 {
                // near the orbit of x
                let hx = apply_group(&haar_sample(spec, &mut r), &x).unwrap();
                &hx + &Signal::random(spec, &mut r).scaled(0.05)
            } else {
                Signal::random(spec, &mut r)
            };
            let dh = d_h(&x, &y).unwrap();
            let g = gram_sqrt_dist(&x, &y).unwrap();
            let tol = 1e-8 * dh.max(1e-12 * (x.norm() + y.norm()));
            if g < dh - tol || g > 2f64.sqrt() * dh + tol {
                violations += 1;
            }
            total += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        violations == 0 && within(el, 30.0),
        format!("{total} pairs over {} specs, {violations} violations, {:.2}s", specs.len(), el.as_secs_f64()),
    )
}

fn procrustes_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let mut r = task_rng(77, i);
        let n = r.random_range(1..=12usize);
        let spec = RepSpec::new((0..n).map(|_| (1, r.random_range(1..=3usize))).collect()).unwrap();
        let x = Signal::<f64>::random(&spec, &mut r);
        let y = Signal::<f64>::random(&spec, &mut r);
        let mut brute = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            let mut s = 0.0;
            for l in 0..n {
                let sign = if mask >> l & 1 == 1 { -1.0 } else { 1.0 };
                s += (x.block(l) - y.block(l) * sign).norm_squared();
            }
            brute = brute.min(s.sqrt());
        }
        worst = worst.max((d_h(&x, &y).unwrap() - brute).abs());
    }
    outcome(worst <= 1e-10, format!("max |d_H - brute force| = {worst:.2e} over 1000 pairs"))
}

fn skew_round_trip() -> Outcome {
    let specs = [
        RepSpec::new(vec![(3, 2), (2, 2)]).unwrap(),
        RepSpec::zn(16).unwrap(),
        RepSpec::cryoem(2, 5).unwrap(),
    ];
    let (mut worst_defect, mut worst_residual) = (0f64, 0f64);
    for i in 0..1000u64 {
        let spec = &specs[i as usize % specs.len()];
        let mut r = task_rng(88, i);
        let x = Signal::<f64>::random(spec, &mut r);
        let hx = apply_group(&haar_sample(spec, &mut r), &x).unwrap();
        let a = (&x + &hx).scaled(0.5);
        let b = (&x - &hx).scaled(0.5);
        let x2 = x.norm_squared();
        worst_defect = worst_defect.max(skew_defect(&a, &b).unwrap() / x2);
        let w = skew_pair_witness(&a, &b, 1e-8).unwrap();
        worst_residual = worst_residual.max(w.residual / x.norm());
    }
    outcome(
        worst_defect <= 1e-9 && worst_residual <= 1e-8,
        format!("max defect/|x|^2 = {worst_defect:.2e}, max witness residual/|x| = {worst_residual:.2e}"),
    )
}

fn segment_example() -> Outcome {
    let grid = [0.4, 0.2, 0.1, 0.05];
    let t = counterexample_line_segment::<f64>(&grid).unwrap();
    let at = t.rows.iter().find(|r| r.y == 0.1).unwrap();
    let x = Signal::<f64>::from_slice(&RepSpec::new(vec![(2, 1)]).unwrap(), &[1.0, 0.0]).unwrap();
    let y = Signal::from_slice(x.spec(), &[1.0, 0.1]).unwrap();
    let direct = lipschitz_ratio(&x, &y).unwrap();
    let strictly = t.rows.windows(2).all(|w| w[1].ratio < w[0].ratio);
    let quad = t.rows.iter().all(|r| r.d_h <= 0.6 * r.y * r.y);
    let pass = (at.lipschitz_ratio - 0.049875).abs() <= 1e-4 && (direct - 0.049875).abs() <= 1e-4 && strictly && quad;
    outcome(
        pass,
        format!("ratio(0.1) = {:.7} (direct {direct:.7}), strictly decreasing {strictly}, d_H <= 0.6 y^2 {quad}", at.lipschitz_ratio),
    )
}

fn plane_example() -> Outcome {
    let t = counterexample_affine_plane(&[1.0, 10.0, 100.0]).unwrap();
    let mut ok = true;
    for r in &t.rows {
        ok &= (r.d_sigma - 8f64.sqrt() * r.a).abs() <= 1e-9;
        ok &= r.d_h == 2.0;
        ok &= (r.ratio - 2f64.sqrt() * r.a).abs() <= 1e-9 * r.a;
    }
    let v = hull_transversality_check(&plane_prior(Some(101.0)), 4000, &mut seeded_rng(6));
    let none = v.kind == VerdictKind::NoViolationFound;
    outcome(
        ok && none,
        format!(
            "table exact {ok}, ratio at a=100 = {:.6}, companion search {:?}",
            t.rows[2].ratio, v.kind
        ),
    )
}

fn c_constant_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut below = false;
    for case in 0..20u64 {
        let mut r = task_rng(99, case);
        let spec = match case % 3 {
            0 => RepSpec::new(vec![(3, 2)]).unwrap(),
            1 => RepSpec::new(vec![(2, 2), (1, 2)]).unwrap(),
            _ => RepSpec::zn(8).unwrap(),
        };
        let d = spec.ambient_dim();
        let k = 1 + (case as usize % 2);
        let x0 = Signal::<f64>::random(&spec, &mut r);
        let chart = AffineChart::new(&spec, x0.to_flat(), &gaussian_matrix(d, k, &mut r)).unwrap();
        let exact = c_constant(&x0, &chart).unwrap();
        let op = tangency_operator(&x0, &chart).unwrap();
        let mut brute = f64::INFINITY;
        for _ in 0..100_000 {
            let v = if k == 1 {
                DVector::from_element(1, 1.0)
            } else {
                let th: f64 = r.random_range(0.0..std::f64::consts::TAU);
                DVector::from_vec(vec![th.cos(), th.sin()])
            };
            brute = brute.min((&op * v).norm());
        }
        below |= brute < exact - 1e-12;
        worst = worst.max((brute - exact).abs());
    }
    let spec = RepSpec::new(vec![(2, 1)]).unwrap();
    let circle = Prior::Manifold(ManifoldPrior::<f64>::sphere(&spec, 1, 1.0).unwrap());
    let theta = DVector::from_vec(vec![1.0, 0.0]);
    let tangent = local_affine_chart(&circle, &theta).unwrap();
    let c_tan = c_constant(&circle.decode_signal(&theta), &tangent).unwrap();
    outcome(
        worst <= 1e-6 && !below && c_tan <= 1e-12,
        format!("max |brute - exact| = {worst:.2e} on 20 cases, circle tangent c = {c_tan:.1e}"),
    )
}

fn planted_violation() -> Outcome {
    let s = RepSpec::new(vec![(3, 1), (2, 2)]).unwrap();
    let mut found = 0;
    for seed in 0..50u64 {
        let mut r = seeded_rng(seed);
        let x = Signal::<f64>::random(&s, &mut r);
        let y = apply_group(&haar_sample(&s, &mut r), &x).unwrap();
        let a = (&x + &y).scaled(0.5);
        let b = (&x - &y).scaled(0.5);
        let extra = Signal::random(&s, &mut r);
        let prior = LinearPrior::from_signals(&s, &[a, b, extra]).unwrap();
        if transversality_search_linear(&prior, 1000, &mut seeded_rng(1000 + seed)).is_violation() {
            found += 1;
        }
    }
    let z32 = RepSpec::zn(32).unwrap();
    let mut clean = 0;
    for seed in 0..20u64 {
        let mut r = seeded_rng(500 + seed);
        let prior = LinearPrior::<f64>::generic(&z32, 5, &mut r).unwrap();
        if transversality_search_linear(&prior, 10_000, &mut r).kind == VerdictKind::NoViolationFound {
            clean += 1;
        }
    }
    outcome(
        found * 100 >= 95 * 50 && clean == 20,
        format!("planted detected {found}/50, generic Z_32 M=5 clean {clean}/20"),
    )
}

fn z32_linear(seed: u64) -> (Prior<f64>, DVector<f64>) {
    let mut r = seeded_rng(seed);
    let prior = Prior::Linear(LinearPrior::generic(&RepSpec::zn(32).unwrap(), 5, &mut r).unwrap());
    let theta = prior.sample_params(&mut r);
    (prior, theta)
}

fn noiseless_recovery() -> Outcome {
    let t = Instant::now();
    let opts = RecoveryOptions::default();
    let mut ok = 0;
    for trial in 0..50u64 {
        let (prior, theta) = z32_linear(3000 + trial);
        let truth = prior.decode_signal(&theta);
        let res = recover_from_gram(&second_moment(&truth), &prior, &opts, None, &mut task_rng(31, trial)).unwrap();
        if relative_error(&res.estimate, &truth).unwrap() <= 1e-6 {
            ok += 1;
        }
    }
    let el = t.elapsed();

    let (prior, theta) = z32_linear(1);
    let g = second_moment(&prior.decode_signal(&theta));
    let mut r = seeded_rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let th = prior.sample_params(&mut r);
        let grad = gram_misfit_gradient(&prior, &g, &th);
        let h = 1e-6;
        let fd = DVector::from_fn(th.len(), |i, _| {
            let mut p = th.clone();
            let mut m = th.clone();
            p[i] += h;
            m[i] -= h;
            (gram_misfit(&prior, &g, &p) - gram_misfit(&prior, &g, &m)) / (2.0 * h)
        });
        worst = worst.max((&grad - &fd).norm() / grad.norm());
    }
    outcome(
        ok >= 45 && within(el, 60.0) && worst <= 1e-5,
        format!(
            "recovered {ok}/50 to 1e-6 in {:.2}s, gradient vs finite differences {worst:.2e}",
            el.as_secs_f64()
        ),
    )
}

fn stability_scaling() -> Outcome {
    let deltas = [1e-3, 1e-2, 1e-1];
    let opts = RecoveryOptions::default();
    let (prior, theta) = z32_linear(4);
    let rep = noise_stability_experiment(&prior, &theta, &deltas, 10, &opts, &mut seeded_rng(5)).unwrap();
    let seg = segment_prior::<f64>(None);
    let control = noise_stability_experiment(
        &seg,
        &DVector::from_element(1, 0.0),
        &deltas,
        10,
        &opts,
        &mut seeded_rng(6),
    )
    .unwrap();
    outcome(
        (rep.slope - 1.0).abs() <= 0.15 && control.slope < 0.7,
        format!("Z_32 M=5 slope {:.3}, segment control slope {:.3}", rep.slope, control.slope),
    )
}

fn dft_power(x: &DVector<f64>, k: usize) -> f64 {
    let n = x.len();
    let (mut re, mut im) = (0.0, 0.0);
    for t in 0..n {
        let a = std::f64::consts::TAU * (k * t) as f64 / n as f64;
        re += x[t] * a.cos();
        im -= x[t] * a.sin();
    }
    re * re + im * im
}

fn power_spectrum() -> Outcome {
    let mut worst: f64 = 0.0;
    for n in [8usize, 16, 32] {
        let x = gaussian_matrix::<f64, _>(n, 1, &mut seeded_rng(n as u64)).column(0).into_owned();
        let sig = signal_to_blocks(&x).unwrap();
        let g = extract_gram(&population_moment(&sig, GroupAction::ZnCirculant).unwrap(), sig.spec()).unwrap();
        let nf = n as f64;
        let mut oracle = vec![dft_power(&x, 0) / nf, dft_power(&x, n / 2) / nf];
        oracle.extend((1..n / 2).map(|k| 2.0 * dft_power(&x, k) / nf));
        for (b, p) in g.blocks().iter().zip(&oracle) {
            worst = worst.max((b[(0, 0)] - p).abs());
        }
    }
    outcome(worst <= 1e-9, format!("max deviation from DFT power spectrum {worst:.2e}"))
}

fn sample_complexity() -> Outcome {
    let t = Instant::now();
    let x = signal_to_blocks(&gaussian_matrix::<f64, _>(8, 1, &mut seeded_rng(12)).column(0).into_owned()).unwrap();
    let n = 4000;
    let rows = sample_complexity_experiment(&x, GroupAction::ZnCirculant, &[1.0], &[n, 4 * n], 20, &mut seeded_rng(13))
        .unwrap();
    let ratio = rows[0].mean_error / rows[1].mean_error;
    let a = sample_complexity_experiment(&x, GroupAction::ZnCirculant, &[1.0], &[n], 20, &mut seeded_rng(15)).unwrap();
    let b = sample_complexity_experiment(&x, GroupAction::ZnCirculant, &[2.0], &[16 * n], 20, &mut seeded_rng(16))
        .unwrap();
    let agree = b[0].mean_error / a[0].mean_error;
    let el = t.elapsed();
    outcome(
        (ratio - 2.0).abs() <= 0.4 && (agree - 1.0).abs() <= 0.3 && within(el, 300.0),
        format!(
            "error(n)/error(4n) = {ratio:.3}, error(sigma=2, 16n)/error(sigma=1, n) = {agree:.3}, {:.1}s",
            el.as_secs_f64()
        ),
    )
}

fn run_cli(args: &[&str], out: &Path, workers: usize) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_gramlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--workers")
        .arg(workers.to_string())
        .output()
        .expect("run gramlab");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn determinism() -> Outcome {
    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("metrics", vec!["metrics", "--spec", "{\"blocks\":[[3,2],[1,2]]}", "--pairs", "200", "--seed", "1"]),
        ("lipschitz", vec!["lipschitz", "--prior", "linear", "--spec", "zn32", "--m", "5", "--pairs", "2000", "--seed", "7"]),
        ("transversality", vec!["transversality", "--prior", "sparse", "--spec", "zn8", "--m", "1", "--budget", "2000", "--seed", "3"]),
        ("recover", vec!["recover", "--prior", "linear", "--spec", "zn16", "--m", "3", "--trials", "3", "--deltas", "0.01,0.1", "--noise-trials", "2", "--seed", "4"]),
        ("mra", vec!["mra", "--zn", "8", "--sigmas", "0.5,1", "--ns", "3000,9000", "--trials", "3", "--seed", "5"]),
        ("cryoem", vec!["cryoem", "--l", "1", "--r", "3", "--m", "2", "--trials", "2", "--seed", "6"]),
    ];
    let dir = tempfile::tempdir().expect("temp dir");
    let mut differing = Vec::new();
    let mut files = 0;
    for (name, args) in &commands {
        let a = dir.path().join(format!("{name}-a"));
        let b = dir.path().join(format!("{name}-b"));
        let (ca, ea) = run_cli(args, &a, 1);
        let (cb, eb) = run_cli(args, &b, 4);
        if ca != 0 || cb != 0 {
            differing.push(format!("{name} exit {ca}/{cb}: {ea}{eb}"));
            continue;
        }
        for entry in std::fs::read_dir(&a).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().is_some_and(|e| e == "csv") {
                files += 1;
                let other = b.join(p.file_name().unwrap());
                if std::fs::read(&p).ok() != std::fs::read(&other).ok() {
                    differing.push(p.file_name().unwrap().to_string_lossy().into_owned());
                }
            }
        }
    }
    outcome(
        differing.is_empty() && files >= commands.len(),
        format!("{files} CSV files from {} commands, differing: {differing:?}", commands.len()),
    )
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("K cross-check", k_cross_check),
        ("sandwich d_H <= Gram-root distance <= sqrt(2) d_H", sandwich),
        ("Procrustes vs sign brute force", procrustes_oracle),
        ("skew-pair round trip", skew_round_trip),
        ("segment counterexample", segment_example),
        ("plane counterexample", plane_example),
        ("c-constant exactness", c_constant_exactness),
        ("planted violation / generic pass", planted_violation),
        ("noiseless recovery and gradient", noiseless_recovery),
        ("stability scaling", stability_scaling),
        ("power-spectrum identity", power_spectrum),
        ("sample complexity", sample_complexity),
        ("CLI determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} [{tag}] {name}: {} ({:.1}s)", i + 1, o.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
