//! Writes the synthetic 8-asset price fixture used by the pipeline tests:
//! ten sessions of 30-second quotes with a common factor, stochastic
//! volatility, occasional volatility jumps, a little quote noise and a few
//! malformed rows.
//!
//! cargo run -p grou --example make_price_fixture -- crates/core/tests/data/prices_8.csv

use std::io::Write;

use chrono::{Duration, NaiveDate};
use grou::rng::stream_rng;
use rand::Rng;
use rand_distr::StandardNormal;

const ASSETS: [&str; 8] = ["IDX", "EXC", "TEC1", "TEC2", "FIN1", "FIN2", "ENR", "HLT"];
const LOADINGS: [f64; 8] = [1.0, 0.8, 1.2, 1.1, 0.9, 0.9, 0.6, 0.5];
const SECTOR: [usize; 8] = [0, 0, 1, 1, 2, 2, 3, 3];

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "prices_8.csv".into());
    let mut rng = stream_rng(20_240_102, 0);
    let mut w = std::io::BufWriter::new(std::fs::File::create(&out).expect("create fixture"));
    writeln!(w, "timestamp,{}", ASSETS.join(",")).unwrap();

    let dt = 30.0 / 23_400.0;
    let base_var = 1e-4;
    let mut log_price: Vec<f64> = (0..8).map(|i| (50.0 + 20.0 * i as f64).ln()).collect();
    // log-volatility states: market, four sectors, eight idiosyncratic
    let mut lv = vec![0.0f64; 13];
    let kappa = 6.5;
    let mut day = NaiveDate::from_ymd_opt(2024, 1, 2).unwrap();
    let mut sessions = 0;
    while sessions < 10 {
        if day.format("%u").to_string().parse::<u32>().unwrap() > 5 {
            day += Duration::days(1);
            continue;
        }
        let open = day.and_hms_opt(9, 30, 0).unwrap();
        for s in 0..780 {
            for x in lv.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += -kappa * *x * dt + 1.2 * (2.0 * kappa * dt).sqrt() * z;
                if rng.random::<f64>() < 0.3 * dt {
                    *x += if rng.random::<bool>() { 0.8 } else { -0.8 };
                }
            }
            let zm: f64 = rng.sample(StandardNormal);
            let zs: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            for i in 0..8 {
                let zi: f64 = rng.sample(StandardNormal);
                let vm = 0.6 * base_var * (lv[0]).exp();
                let vs = 0.2 * base_var * (lv[1 + SECTOR[i]]).exp();
                let vi = 0.2 * base_var * (lv[5 + i]).exp();
                log_price[i] +=
                    LOADINGS[i] * (vm * dt).sqrt() * zm + (vs * dt).sqrt() * zs[SECTOR[i]] + (vi * dt).sqrt() * zi;
            }
            let ts = open + Duration::seconds(30 * s);
            let cells: Vec<String> = (0..8)
                .map(|i| {
                    if rng.random::<f64>() < 0.002 {
                        String::new()
                    } else {
                        let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 2e-5;
                        format!("{:.6}", (log_price[i] + noise).exp())
                    }
                })
                .collect();
            writeln!(w, "{},{}", ts.format("%Y-%m-%dT%H:%M:%S"), cells.join(",")).unwrap();
            if s == 100 + 97 * sessions as i64 % 500 {
                writeln!(w, "{},{}", ts.format("%Y-%m-%dT%H:%M:%S"), "n/a,".repeat(7) + "n/a").unwrap();
            }
        }
        sessions += 1;
        day += Duration::days(1);
    }
}
