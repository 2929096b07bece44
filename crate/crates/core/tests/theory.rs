use rapopt::baselines::{run_ag, AgConfig};
use rapopt::generators::{gen_scad_ls, GenSpec};
use rapopt::metrics::{eps_delta_certificate, MonitorOptions, SubproblemOptions};
use rapopt::problems::Counters;
use rapopt::rapgrad::{rapgrad_run, RapGradConfig};

#[test]
fn certificate_means_respect_the_guarantee_scale() {
    let inst = gen_scad_ls(&GenSpec::scad_ls(30, 8, 21)).unwrap();
    let p = &inst.problem;
    let (l, mu) = (p.lipschitz(), p.lower_curvature());
    let k = 15;
    let seeds = 0..24u64;

    let ag = run_ag(
        p,
        &AgConfig {
            max_iter: Some(20_000),
            monitor: MonitorOptions { max_passes: f64::INFINITY, ..Default::default() },
            ..Default::default()
        },
    )
    .unwrap();
    let mut best = p.full_objective(&ag.x, &mut Counters::default()).unwrap();
    let f0 = p.full_objective(&vec![0.0; p.dim()], &mut Counters::default()).unwrap();

    let opts = SubproblemOptions::default();
    let mut eps = Vec::new();
    let mut delta = Vec::new();
    for seed in seeds {
        let out = rapgrad_run(p, &RapGradConfig { k, seed, ..Default::default() }).unwrap();
        for x in &out.outer_iterates {
            best = best.min(p.full_objective(x, &mut Counters::default()).unwrap());
        }
        let center = out.output_center().unwrap().to_vec();
        let c = eps_delta_certificate(p, &out.x, &center, &opts).unwrap();
        eps.push(c.eps_hat);
        delta.push(c.delta_hat);
    }
    let d0 = f0 - best;
    assert!(d0 > 0.0);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (me, md) = (mean(&eps), mean(&delta));
    let eps_bound = 36.0 * mu * d0 / k as f64;
    let delta_bound = 4.0 * mu * d0 / (k as f64 * l * l);
    assert!(me <= eps_bound, "mean ε̂ {me:e} > {eps_bound:e}");
    assert!(md <= delta_bound, "mean δ̂ {md:e} > {delta_bound:e}");
}

#[test]
fn certificate_shrinks_with_more_outer_iterations() {
    let inst = gen_scad_ls(&GenSpec::scad_ls(20, 6, 5)).unwrap();
    let p = &inst.problem;
    let opts = SubproblemOptions::default();
    let mean_eps = |k: usize| {
        let total: f64 = (0..16u64)
            .map(|seed| {
                let out = rapgrad_run(p, &RapGradConfig { k, seed, ..Default::default() }).unwrap();
                let center = out.output_center().unwrap().to_vec();
                eps_delta_certificate(p, &out.x, &center, &opts).unwrap().eps_hat
            })
            .sum();
        total / 16.0
    };
    assert!(mean_eps(40) < mean_eps(4));
}
