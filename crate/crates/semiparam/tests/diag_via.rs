use semiparam::gp::{multi_output_fit, GpFitOptions, GpProblem, MeanSpec, SharingMode};
use semiparam::metrics::rmse;
use semiparam::parametric::lls_fit;
use semiparam::scenario::via::{
    via_build_datasets, via_model, via_synthetic_generate, ViaConfig,
};

#[test]
#[ignore]
fn diag_via_recovery_and_ar() {
    let cfg = ViaConfig::default();
    let telemetry = via_synthetic_generate(&cfg.synthetic, 5);
    let ds = via_build_datasets(&cfg, &telemetry).unwrap();
    let model = via_model(2, cfg.theta_init);

    // regress the true residual (tau - 400 dq - 10 dqd) onto [dq, dqd]
    {
        use nalgebra::{DMatrix, DVector};
        let x = ds.instant_train.inputs();
        let y = ds.instant_train.targets();
        let n = x.nrows();
        let mut r = DVector::zeros(n);
        for i in 0..n {
            r[i] = y[(i, 0)] - 400.0 * x[(i, 0)] - 10.0 * x[(i, 1)];
        }
        let a = DMatrix::from_fn(n, 2, |i, j| x[(i, j)]);
        let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * &r)).unwrap();
        let rstd = (r.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        println!("residual proj: dK={:.2} dD={:.3} resid_rms={:.3}", sol[0], sol[1], rstd);
        println!(
            "feature rms: dq={:.5} dqd={:.4}",
            (x.column(0).iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt(),
            (x.column(1).iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt()
        );
    }

    let full = lls_fit(&model, &ds.instant_train).unwrap();
    println!(
        "LLS full: K={:.1} D={:.2} train_rmse={:.3}",
        full.coefficients[0], full.coefficients[1], full.train_rmse[0]
    );

    let train = ds.instant_train.subsample(400, 5);
    {
        use nalgebra::{DMatrix, DVector};
        let x = train.inputs();
        let y = train.targets();
        let n = x.nrows();
        let mut r = DVector::zeros(n);
        for i in 0..n {
            r[i] = y[(i, 0)] - 400.0 * x[(i, 0)] - 10.0 * x[(i, 1)];
        }
        let a = DMatrix::from_fn(n, 2, |i, j| x[(i, j)]);
        let sol = (a.transpose() * &a).lu().solve(&(a.transpose() * &r)).unwrap();
        println!("sub400 residual proj: dK={:.2} dD={:.3}", sol[0], sol[1]);
        let lls_sub = lls_fit(&model, &train).unwrap();
        println!("LLS sub400: K={:.1} D={:.2}", lls_sub.coefficients[0], lls_sub.coefficients[1]);
    }
    let problem = GpProblem::from_matrices(
        train.inputs().clone(),
        train.targets().clone(),
        MeanSpec::Basis(via_model(2, cfg.theta_init)),
    )
    .unwrap();
    let fitted = problem.fit(&GpFitOptions::default()).unwrap();
    let th = fitted.mean_coefficients().unwrap();
    println!("SPGP sub400: K={:.1} D={:.2} | {:?}", th[0], th[1], fitted.summary().kernel);

    for (name, tr, te) in [
        ("instant", &ds.instant_train, &ds.instant_test),
        ("ar", &ds.ar_train, &ds.ar_test),
    ] {
        let sub = tr.subsample(400, 5);
        let gp = multi_output_fit(&sub, MeanSpec::Zero, SharingMode::Shared, &GpFitOptions::default()).unwrap();
        let pred = gp.predict(te.inputs()).unwrap();
        let e = rmse(&pred, te.targets()).unwrap();
        let tstd = {
            let t = te.targets();
            let m = t.sum() / t.nrows() as f64;
            (t.iter().map(|v| (v - m).powi(2)).sum::<f64>() / t.nrows() as f64).sqrt()
        };
        println!("plain GP {name}: test rmse={:.3} (target std {:.2})", e[0], tstd);
    }
}
