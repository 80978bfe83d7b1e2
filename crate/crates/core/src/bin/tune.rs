// Scratch experiment driver for picking acceptance-scale hyperparameters.
// Not part of the deliverable surface; removed before release.

use tfd_core::eval::{confusion, metrics};
use tfd_core::ingest::{
    apply_normalization, extract_features, fit_normalization, segment_stream, FEATURE_STEPS,
};
use tfd_core::nn::Matrix;
use tfd_core::pipeline::{detect_batch, train, Hyperparams, Thresholds};
use tfd_core::reconstructor::{init_freq, init_time};
use tfd_core::synth::{
    attack_preset, compose_dataset, gen_attack_segments, gen_normal, split_train_valid, Label,
    NormalTrafficConfig,
};

fn moving_avg_monotone(vals: &[f64], window: usize, from: usize) -> bool {
    let ma: Vec<f64> = (0..=vals.len() - window)
        .map(|i| vals[i..i + window].iter().sum::<f64>() / window as f64)
        .collect();
    let mut prev = f64::INFINITY;
    for (i, v) in ma.iter().enumerate() {
        if i + window >= from && *v > prev + 1e-12 {
            return false;
        }
        if i + window >= from {
            prev = *v;
        }
    }
    true
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rate: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(45.0);
    let lr_time: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.01);
    let lr_freq: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.002);
    let epochs: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(100);
    println!("rate={rate} lr_time={lr_time} lr_freq={lr_freq} epochs={epochs}");

    let seed = 42u64;
    let minority_rate: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(0.4);
    let minority_segs: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(108);
    let t0 = std::time::Instant::now();
    let busy_cfg = NormalTrafficConfig { mean_rate: rate, pkt_len_range: (512, 512), n_clients: 4 };
    let quiet_cfg =
        NormalTrafficConfig { mean_rate: minority_rate, pkt_len_range: (512, 512), n_clients: 4 };
    let busy_count = 2160 - minority_segs;
    let busy = gen_normal(&busy_cfg, busy_count as f64 * 10.0, seed);
    let quiet = gen_normal(&quiet_cfg, (minority_segs + 20) as f64 * 10.0, seed + 1000);
    let mut normal_segs = segment_stream(&busy, 10.0);
    normal_segs.truncate(busy_count);
    let mut quiet_segs = segment_stream(&quiet, 10.0);
    quiet_segs.truncate(minority_segs);
    normal_segs.extend(quiet_segs);
    println!(
        "normal: {} busy + {} quiet packets, {} segments ({:.1?})",
        busy.len(),
        quiet.len(),
        normal_segs.len(),
        t0.elapsed()
    );

    let (train_segs, valid_segs) = split_train_valid(&normal_segs, 0.7, seed);
    let train_feats: Vec<_> = train_segs.iter().map(|s| extract_features(s, FEATURE_STEPS)).collect();
    let stats = fit_normalization(&train_feats).unwrap();
    println!("norm stats: t in [{:.4},{:.4}] l in [{},{}]", stats.t_min, stats.t_max, stats.l_min, stats.l_max);
    let train_set: Vec<Matrix> =
        train_feats.iter().map(|f| apply_normalization(f, &stats).to_matrix()).collect();
    let valid_set: Vec<Matrix> = valid_segs
        .iter()
        .map(|s| apply_normalization(&extract_features(s, FEATURE_STEPS), &stats).to_matrix())
        .collect();
    println!("train {} valid {}", train_set.len(), valid_set.len());

    let hp = Hyperparams {
        epochs,
        calib_epoch_lo: (epochs * 71 / 100).max(1),
        calib_epoch_hi: epochs,
        seed,
        ..Default::default()
    };

    let report = |name: &str, trace: &tfd_core::pipeline::TrainingTrace| {
        let lo = hp.calib_epoch_lo - 1;
        let window = &trace.valid_error[lo..hp.calib_epoch_hi];
        let wmean = window.iter().sum::<f64>() / window.len() as f64;
        let wsd = (window.iter().map(|v| (v - wmean).powi(2)).sum::<f64>() / window.len() as f64).sqrt();
        let final_v = *trace.valid_error.last().unwrap();
        println!(
            "{name}: train[0]={:.5} train[last]={:.5} ratio={:.3} | valid: e1={:.5} e{}={:.5} e{}={:.5} final={:.5} | wmean={:.5} cov={:.3} wmean/final={:.2} | ma_mono={} | epoch_s={:.2}",
            trace.train_loss[0],
            trace.train_loss.last().unwrap(),
            trace.train_loss.last().unwrap() / trace.train_loss[0],
            trace.valid_error[0],
            epochs * 2 / 5, trace.valid_error[epochs * 2 / 5 - 1],
            hp.calib_epoch_lo, trace.valid_error[lo],
            final_v,
            wmean,
            wsd / wmean,
            wmean / final_v,
            moving_avg_monotone(&trace.train_loss, 10, 20),
            trace.epoch_seconds.iter().sum::<f64>() / trace.epoch_seconds.len() as f64,
        );
        wmean
    };

    let t1 = std::time::Instant::now();
    let mut time_model = init_time(seed);
    let time_trace = train(&mut time_model, &train_set, &valid_set, &hp, lr_time).unwrap();
    println!("time model trained in {:.1?}", t1.elapsed());
    if std::env::var("TUNE_CURVES").is_ok() {
        for (i, (tl, ve)) in time_trace.train_loss.iter().zip(&time_trace.valid_error).enumerate()
        {
            println!("  epoch {:3}: train {tl:.6} valid {ve:.6}", i + 1);
        }
    }
    let r_t = report("time", &time_trace);

    let t2 = std::time::Instant::now();
    let mut freq_model = init_freq(seed);
    let freq_trace = train(&mut freq_model, &train_set, &valid_set, &hp, lr_freq).unwrap();
    println!("freq model trained in {:.1?}", t2.elapsed());
    let r_f = report("freq", &freq_trace);

    // Compose the detection set and measure separation.
    let profile = attack_preset("hping").unwrap();
    let attack_segs = gen_attack_segments(&profile, 3600.0, seed + 1).unwrap();
    println!("attack segments: {}", attack_segs.len());
    let ds = compose_dataset("tune", &normal_segs, &attack_segs, 360, seed).unwrap();

    let th = Thresholds { r_t, r_f };
    let inputs: Vec<(String, tfd_core::ingest::FeatureMatrix)> = ds
        .segments
        .iter()
        .map(|(s, _)| (s.segment_id.clone(), apply_normalization(&extract_features(s, FEATURE_STEPS), &stats)))
        .collect();
    let results = detect_batch(&inputs, &time_model, &freq_model, &th).unwrap();
    let preds: Vec<_> = results.iter().map(|r| r.verdict).collect();
    let labels: Vec<Label> = ds.segments.iter().map(|(_, l)| *l).collect();
    let cm = confusion(&preds, &labels).unwrap();
    let m = metrics(&cm);
    println!("thresholds r_t={r_t:.5} r_f={r_f:.5}");
    println!("cm: tp={} fn={} fp={} tn={}", cm.tp, cm.fn_, cm.fp, cm.tn);
    println!("recall={:.4} far={:.4} acc={:.4}", m.recall, m.fpr, m.accuracy);

    // Per-side false positives.
    let mut fp_time = 0;
    let mut fp_freq = 0;
    for (r, l) in results.iter().zip(&labels) {
        if *l == Label::Normal {
            if r.r_t >= th.r_t {
                fp_time += 1;
            }
            if r.r_f >= th.r_f {
                fp_freq += 1;
            }
        }
    }
    println!("fp by side: time={fp_time} freq={fp_freq} (of {})", cm.fp + cm.tn);
    // Attack score stats.
    let mut t_scores: Vec<f64> = results.iter().zip(&labels).filter(|(_, l)| **l == Label::Attack).map(|(r, _)| r.r_t).collect();
    t_scores.sort_by(f64::total_cmp);
    let mut f_scores: Vec<f64> = results.iter().zip(&labels).filter(|(_, l)| **l == Label::Attack).map(|(r, _)| r.r_f).collect();
    f_scores.sort_by(f64::total_cmp);
    if !t_scores.is_empty() {
        println!(
            "attack r_t: min={:.5} p10={:.5} med={:.5} | attack r_f: min={:.5} p10={:.5} med={:.5}",
            t_scores[0], t_scores[t_scores.len() / 10], t_scores[t_scores.len() / 2],
            f_scores[0], f_scores[f_scores.len() / 10], f_scores[f_scores.len() / 2]
        );
    }
    let mut nt: Vec<f64> = results.iter().zip(&labels).filter(|(_, l)| **l == Label::Normal).map(|(r, _)| r.r_t).collect();
    nt.sort_by(f64::total_cmp);
    let mut nf: Vec<f64> = results.iter().zip(&labels).filter(|(_, l)| **l == Label::Normal).map(|(r, _)| r.r_f).collect();
    nf.sort_by(f64::total_cmp);
    println!(
        "normal r_t: med={:.5} p90={:.5} p99={:.5} max={:.5} | r_f: med={:.5} p90={:.5} p99={:.5} max={:.5}",
        nt[nt.len() / 2], nt[nt.len() * 9 / 10], nt[nt.len() * 99 / 100], nt[nt.len() - 1],
        nf[nf.len() / 2], nf[nf.len() * 9 / 10], nf[nf.len() * 99 / 100], nf[nf.len() - 1]
    );
    println!("total {:.1?}", t0.elapsed());
}
