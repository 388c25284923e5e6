use heccsim_core::conic::{self, ConicProgram, LinExpr};
use rand::Rng;
use rand::SeedableRng;

fn main() {
    // Synthetic S-SP-sized program: 60 vars, ~80 rows, 24 rsoc blocks.
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let build = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut p = ConicProgram::new();
        let xs: Vec<usize> = (0..36).map(|i| p.add_var(format!("x{i}"), 0.0, 1.0)).collect();
        let qs: Vec<usize> = (0..24).map(|i| p.add_var(format!("q{i}"), 0.0, f64::INFINITY)).collect();
        for i in 0..36 {
            p.add_linear_obj(xs[i], rng.random::<f64>());
        }
        for i in 0..24 {
            p.add_linear_obj(qs[i], rng.random::<f64>() * 0.1);
            let x = xs[rng.random_range(0..36)];
            p.add_rsoc(LinExpr::var(qs[i]), LinExpr::constant(1.0), vec![LinExpr::var(x).offset(-0.5)]);
        }
        for _ in 0..40 {
            let mut e = LinExpr::new();
            for _ in 0..6 {
                e.push(xs[rng.random_range(0..36)], rng.random::<f64>() - 0.3);
            }
            p.add_le(e, 1.0 + rng.random::<f64>());
        }
        let mut sum = LinExpr::new();
        for i in 0..36 { sum.push(xs[i], 1.0); }
        p.add_le(sum, 12.0);
        p
    };
    let t0 = std::time::Instant::now();
    let mut iters = 0;
    for _ in 0..100 {
        let p = build(&mut rng);
        let sol = conic::solve(&p, 1e-8, 200).unwrap();
        iters += sol.iterations;
    }
    println!("100 solves in {:?} (avg iters {})", t0.elapsed(), iters / 100);
}
