use masked_shapelets::dataset::write_dataset;
use masked_shapelets::synthgen::{default_pattern_bank, generate, generate_with_truth, Pattern, SynthConfig, SynthOutput};

fn large_sample() -> SynthOutput {
    // short series keep the sample cheap; pattern and class draws do not depend on Q
    let cfg = SynthConfig {
        train_size: 3000,
        test_size: 1,
        series_length: 40,
        seed: 11,
        ..SynthConfig::default()
    };
    generate_with_truth(&cfg).unwrap()
}

#[test]
fn pair_frequencies_follow_the_class_table() {
    let out = large_sample();
    let mut per_class = [0usize; 3];
    let mut ad = [0usize; 3];
    for p in &out.train_planted {
        let c = p.class as usize - 1;
        per_class[c] += 1;
        if p.patterns[0] == Pattern::A && p.patterns[1] == Pattern::D {
            ad[c] += 1;
        }
    }
    let n: usize = per_class.iter().sum();
    for &count in &per_class {
        let freq = count as f64 / n as f64;
        assert!((freq - 1.0 / 3.0).abs() <= 0.04, "class frequency {freq}");
    }
    let p_ad_1 = ad[0] as f64 / per_class[0] as f64;
    assert!((p_ad_1 - 0.5).abs() <= 0.05, "p(A,D | y=1) = {p_ad_1}");
    for c in 1..3 {
        let p = ad[c] as f64 / per_class[c] as f64;
        assert!(p < 0.02, "p(A,D | y={}) = {p}", c + 1);
    }
}

#[test]
fn distractor_patterns_are_uniform_and_class_independent() {
    let out = large_sample();
    let mut table = [[0f64; 6]; 3];
    for p in &out.train_planted {
        for &pat in &p.patterns[2..] {
            table[p.class as usize - 1][pat.index()] += 1.0;
        }
    }
    let total: f64 = table.iter().flatten().sum();

    // goodness of fit to uniform, 5 degrees of freedom, critical value at 0.01
    let expected = total / 6.0;
    let gof: f64 = (0..6)
        .map(|j| {
            let observed: f64 = table.iter().map(|row| row[j]).sum();
            (observed - expected).powi(2) / expected
        })
        .sum();
    assert!(gof < 15.086, "uniformity chi-square {gof}");

    // independence of class and pattern, 10 degrees of freedom
    let row_sums: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..6).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let mut indep = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let e = row_sums[i] * col_sums[j] / total;
            indep += (obs - e).powi(2) / e;
        }
    }
    assert!(indep < 23.209, "independence chi-square {indep}");
}

#[test]
fn planted_patterns_sit_on_a_noise_floor() {
    let cfg = SynthConfig {
        train_size: 30,
        test_size: 5,
        num_channels: 6,
        series_length: 80,
        pattern_length: 12,
        noise_sd: 0.1,
        seed: 3,
    };
    let out = generate_with_truth(&cfg).unwrap();
    let bank = default_pattern_bank(cfg.pattern_length).unwrap();
    let (mut sum_sq, mut count) = (0.0, 0usize);
    for (inst, planted) in out.train.instances().iter().zip(&out.train_planted) {
        assert_eq!(out.train.class_labels()[inst.class].to_string(), planted.class.to_string());
        for ((channel, &pat), &at) in inst.channels.iter().zip(&planted.patterns).zip(&planted.offsets) {
            assert!(at + cfg.pattern_length <= cfg.series_length);
            for (t, &x) in channel.iter().enumerate() {
                let planted_value = if (at..at + cfg.pattern_length).contains(&t) { bank.get(pat)[t - at] } else { 0.0 };
                sum_sq += (x - planted_value).powi(2);
                count += 1;
            }
        }
    }
    let sd = (sum_sq / count as f64).sqrt();
    assert!((sd - 0.1).abs() < 0.005, "residual sd {sd}");
}

#[test]
fn identical_seeds_serialize_identically() {
    let cfg = SynthConfig {
        train_size: 20,
        test_size: 10,
        seed: 5,
        ..SynthConfig::default()
    };
    let bytes = |cfg: &SynthConfig| {
        let (train, test) = generate(cfg).unwrap();
        let mut out = Vec::new();
        write_dataset(&train, &mut out).unwrap();
        write_dataset(&test, &mut out).unwrap();
        out
    };
    assert_eq!(bytes(&cfg), bytes(&cfg));
    assert_ne!(bytes(&cfg), bytes(&SynthConfig { seed: 6, ..cfg.clone() }));

    let (train, test) = generate(&cfg).unwrap();
    assert_eq!((train.len(), test.len()), (20, 10));
    assert_eq!((train.num_channels(), train.min_length()), (40, 202));
    assert!(train.instances()[0].id.starts_with("train-"));
    assert!(test.instances()[0].id.starts_with("test-"));
}
