use adacm::data::{split, synth_benchmark, Dataset, SplitSpec, SynthSpec};

/// Per-class accuracy of a nearest-centroid classifier fitted on `train`.
fn nearest_centroid(train: &Dataset, test: &Dataset) -> (f64, Vec<f64>) {
    let c = train.classes();
    let d = train.sample_width();
    let mut centroids = vec![vec![0.0; d]; c];
    let mut counts = vec![0.0; c];
    for (x, &y) in train.samples().zip(train.labels()) {
        counts[y] += 1.0;
        for k in 0..d {
            centroids[y][k] += x[k];
        }
    }
    for (m, n) in centroids.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= n);
    }
    let mut hits = vec![0.0; c];
    let mut seen = vec![0.0; c];
    for (x, &y) in test.samples().zip(test.labels()) {
        let dist = |m: &Vec<f64>| m.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let pred = (0..c)
            .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
            .unwrap();
        seen[y] += 1.0;
        if pred == y {
            hits[y] += 1.0;
        }
    }
    let overall = hits.iter().sum::<f64>() / seen.iter().sum::<f64>();
    (overall, hits.iter().zip(&seen).map(|(h, s)| h / s).collect())
}

fn halves(ds: &Dataset) -> (Dataset, Dataset) {
    let s = split(
        ds,
        &SplitSpec {
            labeled: ds.len() / 2,
            seed: 17,
            class_balanced: false,
            test_fraction: 0.5,
        },
    )
    .unwrap();
    (s.labeled, s.test)
}

#[test]
fn near_separable_as_difficulty_vanishes() {
    let ds = synth_benchmark(&SynthSpec {
        difficulty: 0.02,
        ..SynthSpec::default()
    })
    .unwrap();
    let (train, test) = halves(&ds);
    let (acc, _) = nearest_centroid(&train, &test);
    assert!(acc > 0.99, "{acc}");
}

#[test]
fn class_difficulty_differs_at_default() {
    let ds = synth_benchmark(&SynthSpec::default()).unwrap();
    let (train, test) = halves(&ds);
    let (_, per) = nearest_centroid(&train, &test);
    let best = per.iter().cloned().fold(0.0, f64::max);
    let worst = per.iter().cloned().fold(1.0, f64::min);
    assert!(best - worst >= 0.05, "{per:?}");
}
