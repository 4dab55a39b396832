//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use snowframe::compose::{narrow, over, over_wide, widen};
use snowframe::control::ControlServer;
use snowframe::detect::{integral_images, load_cascade, DetectParams, Detector};
use snowframe::frame::GrayImage;
use snowframe::geom::Rect;
use snowframe::runtime::{
    thermal_step, transition, Action, ClockMode, Engine, EngineOptions, EngineState,
    LifecycleEvent, NullSink, PngSequenceSink, SyntheticSource, ThermalModel,
};

use common::{data, pair_by_iou, repo_config, small_config, CountingSource, RecordingSink};

type Outcome = Result<String, String>;

fn main() {
    let criteria: Vec<(&str, fn() -> Outcome)> = vec![
        ("cascade fixture load", cascade_fixture_load),
        ("integral-image oracle", integral_oracle),
        ("detector parity", detector_parity),
        ("four-face cap", four_face_cap),
        ("output format", output_format),
        ("throughput", throughput),
        ("thermal reproduction", thermal_reproduction),
        ("lifecycle", lifecycle),
        ("determinism", determinism),
        ("compositor algebra", compositor_algebra),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check)
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<24} {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name:<24} {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// Counts by scanning the XML text, not through the parser.
fn text_scan_counts(xml: &str) -> (usize, usize) {
    let section = |open: &str, close: &str| -> &str {
        let start = xml.find(open).expect("section start") + open.len();
        let end = start + xml[start..].find(close).expect("section end");
        &xml[start..end]
    };
    let stages = section("<stages>", "</stages>").matches("<stageThreshold>").count();
    let features = section("<features>", "</features>").matches("<rects>").count();
    (stages, features)
}

fn cascade_fixture_load() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for name in ["haarcascade_frontalface_default.xml", "haarcascade_frontalface_alt.xml"] {
        let path = data(&format!("cascades/{name}"));
        let xml = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let (stages, features) = text_scan_counts(&xml);
        let model = load_cascade(&path).map_err(|e| format!("{name}: {e}"))?;
        let got = (model.stages().len(), model.features().len());
        ok &= got == (stages, features);
        details.push(format!("{name}: {}/{} stages, {}/{} features", got.0, stages, got.1, features));
    }
    check(ok, details.join("; "))
}

fn integral_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a7e);
    let mut checked = 0u64;
    for n in 0..1000 {
        let img = if n == 0 {
            GrayImage::filled(128, 128, 255).unwrap()
        } else {
            let w = rng.gen_range(1..=128);
            let h = rng.gen_range(1..=128);
            let samples = (0..w * h).map(|_| rng.gen()).collect();
            GrayImage::new(w, h, samples).unwrap()
        };
        let ii = integral_images(&img);
        let (w, h) = (img.width(), img.height());
        // Running oracle: per-row prefix sums accumulated down the columns.
        let mut col_sum = vec![0u64; w as usize + 1];
        let mut col_sq = vec![0u64; w as usize + 1];
        for y in 0..=h {
            if y > 0 {
                let mut row = 0u64;
                let mut row_sq = 0u64;
                for x in 1..=w {
                    let v = img.get(x - 1, y - 1) as u64;
                    row += v;
                    row_sq += v * v;
                    col_sum[x as usize] += row;
                    col_sq[x as usize] += row_sq;
                }
            }
            for x in 0..=w {
                if ii.sum_at(x, y) != col_sum[x as usize] || ii.sqsum_at(x, y) != col_sq[x as usize] {
                    return Err(format!("image {n} ({w}x{h}) differs at ({x},{y})"));
                }
                checked += 1;
            }
        }
        // Direct double sums on a sample of entries.
        for _ in 0..8 {
            let x = rng.gen_range(0..=w);
            let y = rng.gen_range(0..=h);
            let (mut s, mut q) = (0u64, 0u64);
            for yy in 0..y {
                for xx in 0..x {
                    let v = img.get(xx, yy) as u64;
                    s += v;
                    q += v * v;
                }
            }
            if ii.sum_at(x, y) != s || ii.sqsum_at(x, y) != q {
                return Err(format!("image {n} brute force differs at ({x},{y})"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    check(secs < 60.0, format!("1000 images, {checked} entries exact, {secs:.2}s"))
}

fn rects(v: &Value) -> Vec<Rect> {
    v.as_array()
        .map(|a| {
            a.iter()
                .map(|r| {
                    let n: Vec<i32> = r.as_array().unwrap().iter().map(|x| x.as_i64().unwrap() as i32).collect();
                    Rect::new(n[0], n[1], n[2], n[3])
                })
                .collect()
        })
        .unwrap_or_default()
}

fn reference() -> Value {
    let text = std::fs::read_to_string(data("corpus/reference.json")).expect("reference fixture");
    serde_json::from_str(&text).expect("reference json")
}

fn reference_params(reference: &Value) -> DetectParams {
    let min = reference["min_size"].as_array().unwrap();
    DetectParams {
        scale_factor: reference["scale_factor"].as_f64().unwrap(),
        min_neighbors: reference["min_neighbors"].as_u64().unwrap() as u32,
        min_size: Some((min[0].as_u64().unwrap() as u32, min[1].as_u64().unwrap() as u32)),
        max_faces: usize::MAX,
        ..DetectParams::default()
    }
}

fn detect_file(detector: &Detector, rel: &str) -> Vec<Rect> {
    let img = GrayImage::load_png(data(&format!("corpus/{rel}"))).expect("corpus image");
    detector.detect(&img).into_iter().map(|d| d.rect).collect()
}

fn detector_parity() -> Outcome {
    let reference = reference();
    let detector = Detector::new(common::default_model(), reference_params(&reference)).unwrap();
    let (mut total, mut matched, mut images, mut negatives, mut clean) = (0, 0, 0, 0, 0);
    let mut misses = Vec::new();
    for entry in reference["images"].as_array().unwrap() {
        let file = entry["file"].as_str().unwrap();
        let expected = rects(&entry["reference"]);
        let got = detect_file(&detector, file);
        if file.starts_with("negatives/") {
            negatives += 1;
            if got.is_empty() {
                clean += 1;
            }
            continue;
        }
        images += 1;
        let pairs = pair_by_iou(&expected, &got, 0.6).len();
        total += expected.len();
        matched += pairs;
        if pairs < expected.len() {
            misses.push(format!("{file} {pairs}/{}", expected.len()));
        }
    }
    let rate = matched as f64 / total.max(1) as f64;
    let ok = images >= 20 && negatives == 10 && rate >= 0.9 && clean >= 8;
    let mut detail = format!(
        "{matched}/{total} reference faces paired ({:.1}%) over {images} images; {clean}/{negatives} negatives clean",
        100.0 * rate
    );
    if !misses.is_empty() {
        detail += &format!("; short: {}", misses.join(", "));
    }
    check(ok, detail)
}

fn four_face_cap() -> Outcome {
    let reference = reference();
    let six = &reference["six_faces"];
    let mut expected = rects(&six["reference"]);
    expected.sort_by_key(|r| std::cmp::Reverse(r.area()));
    expected.truncate(4);
    let params = DetectParams {
        min_size: reference_params(&reference).min_size,
        ..DetectParams::default()
    };
    let detector = Detector::new(common::default_model(), params).unwrap();
    let got = detect_file(&detector, six["file"].as_str().unwrap());
    let paired = pair_by_iou(&expected, &got, 0.6).len();
    let exact = {
        let a: BTreeSet<_> = expected.iter().map(|r| (r.x, r.y, r.w, r.h)).collect();
        let b: BTreeSet<_> = got.iter().map(|r| (r.x, r.y, r.w, r.h)).collect();
        a == b
    };
    check(
        got.len() == 4 && paired == 4,
        format!(
            "{} detections, {paired}/4 largest reference faces paired at IoU>=0.6, rectangles identical: {exact}",
            got.len()
        ),
    )
}

fn output_format() -> Outcome {
    let cfg = repo_config();
    let (cw, ch, cfps) = (cfg.pipeline.capture_width, cfg.pipeline.capture_height, cfg.pipeline.capture_fps);
    let hz = cfg.pipeline.output_hz;
    let synthetic = SyntheticSource::with_faces_dir(cw, ch, cfps, &data("faces"), 2, 7).map_err(|e| e.to_string())?;
    let source = CountingSource::new(Box::new(synthetic));
    let delivered = Arc::clone(&source.delivered);
    let sink = RecordingSink::default();
    let frames = Arc::clone(&sink.frames);
    let ticks = 10 * hz as u64;
    let options = EngineOptions {
        clock: ClockMode::Simulated,
        max_ticks: Some(ticks),
        shutdown_on_fault: true,
    };
    let (engine, _) = Engine::new(cfg, common::default_model(), Box::new(source), Box::new(sink), options)
        .map_err(|e| e.to_string())?;
    let summary = engine.run();
    let frames = frames.lock().unwrap();
    let delivered = delivered.lock().unwrap();
    let sizes: BTreeSet<_> = frames.iter().map(|f| f.size).collect();
    let captured = delivered.len();
    let consecutive = delivered.iter().enumerate().all(|(i, &idx)| idx == i as u64);
    let ok = summary.fault.is_none()
        && frames.len() as u64 == ticks
        && sizes == BTreeSet::from([(1280, 800)])
        && captured == 10 * cfps as usize
        && consecutive;
    check(
        ok,
        format!(
            "{} output frames sized {:?} in 10 s at {hz} Hz; {captured} capture frames at {cw}x{ch}@{cfps} (in order: {consecutive})",
            frames.len(),
            sizes
        ),
    )
}

fn throughput() -> Outcome {
    let cfg = repo_config();
    let source = SyntheticSource::with_faces_dir(1920, 1080, 30, &data("faces"), 2, 7).map_err(|e| e.to_string())?;
    let ticks = 300;
    let options = EngineOptions {
        clock: ClockMode::Simulated,
        max_ticks: Some(ticks),
        shutdown_on_fault: true,
    };
    let (engine, _) = Engine::new(cfg, common::default_model(), Box::new(source), Box::new(NullSink::default()), options)
        .map_err(|e| e.to_string())?;
    let started = Instant::now();
    let summary = engine.run();
    let secs = started.elapsed().as_secs_f64();
    let fps = summary.frames_composed as f64 / secs;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let detail = format!(
        "{fps:.1} composed 1280x800 frames/s ({} frames in {secs:.2}s, {cores} core(s), target 30)",
        summary.frames_composed
    );
    if fps >= 30.0 {
        Ok(detail)
    } else if fps >= 20.0 {
        Ok(format!("{detail}; below target, within the reporting band"))
    } else {
        Err(detail)
    }
}

fn thermal_reproduction() -> Outcome {
    let started = Instant::now();
    let mut on = ThermalModel::default();
    on.fan = true;
    for _ in 0..3000 {
        on = thermal_step(&on, 1.0, 1.0).map_err(|e| e.to_string())?;
    }
    let steady_ok = (on.temp - 25.0).abs() <= 0.5;

    let mut off = ThermalModel { temp: 25.0, fan: false, ..ThermalModel::default() };
    let mut crossed = None;
    let mut monotone = true;
    for t in 1..=1500 {
        let next = thermal_step(&off, 1.0, 1.0).map_err(|e| e.to_string())?;
        monotone &= next.temp > off.temp;
        off = next;
        if crossed.is_none() && off.temp > 40.0 {
            crossed = Some(t);
        }
    }
    // Closed form for the fan-off rise from 25 C.
    let k = off.cool_nofan;
    let steady = off.ambient + off.heat_rate / k;
    let analytic = -((steady - 40.0) / (steady - 25.0)).ln() / k;
    let secs = started.elapsed().as_secs_f64();
    let cross_ok = crossed.is_some_and(|t| (t as f64 - analytic).abs() <= 2.0);
    check(
        steady_ok && monotone && cross_ok && secs < 1.0,
        format!(
            "fan-on steady {:.3} C; fan-off crosses 40 C at {}s (closed form {analytic:.1}s), monotone {monotone}; {:.3}s",
            on.temp,
            crossed.map_or("never".to_string(), |t| t.to_string()),
            secs
        ),
    )
}

fn expected_transition(state: &EngineState, event: &LifecycleEvent) -> (EngineState, Vec<Action>) {
    use Action::*;
    use EngineState as S;
    use LifecycleEvent as E;
    let shutdown = vec![PausePipeline, FlushSinks, ReleaseSource, PersistTracker, CloseSinks];
    match (state, event) {
        (S::Initializing, E::InitComplete) => (S::Running, vec![StartSource, StartPipeline]),
        (S::Running, E::SleepRequested) => (
            S::Sleeping,
            vec![PausePipeline, FlushSinks, ReleaseSource, PersistTracker],
        ),
        (S::Sleeping, E::WakeRequested) => (S::Running, vec![ReacquireSource, RestoreTracker, ResumePipeline]),
        (S::ShuttingDown, E::ShutdownRequested) => (S::ShuttingDown, vec![]),
        (_, E::ShutdownRequested) => (S::ShuttingDown, shutdown),
        (S::Initializing | S::Running | S::Sleeping, E::FaultRaised(r)) => {
            (S::Faulted(r.clone()), vec![PausePipeline, FlushSinks, ReleaseSource])
        }
        (s, _) => (s.clone(), vec![]),
    }
}

fn lifecycle() -> Outcome {
    let states = [
        EngineState::Initializing,
        EngineState::Running,
        EngineState::Sleeping,
        EngineState::ShuttingDown,
        EngineState::Faulted("earlier".into()),
    ];
    let events = [
        LifecycleEvent::InitComplete,
        LifecycleEvent::SleepRequested,
        LifecycleEvent::WakeRequested,
        LifecycleEvent::ShutdownRequested,
        LifecycleEvent::FaultRaised("sensor".into()),
    ];
    let mut cells = 0;
    for s in &states {
        for e in &events {
            let got = transition(s, e);
            let (next, actions) = expected_transition(s, e);
            if got.next != next || got.actions != actions {
                return Err(format!("{s} + {e:?}: got {:?} {:?}, expected {next:?} {actions:?}", got.next, got.actions));
            }
            cells += 1;
        }
    }
    let stress = lifecycle_stress()?;
    Ok(format!("{cells}/25 table cells; {stress}"))
}

fn lifecycle_stress() -> Result<String, String> {
    let started = Instant::now();
    let options = EngineOptions {
        clock: ClockMode::Realtime,
        max_ticks: None,
        shutdown_on_fault: false,
    };
    let source = SyntheticSource::new(640, 360, 30, Vec::new(), 3);
    let (engine, handle) = Engine::new(
        small_config(),
        common::default_model(),
        Box::new(source),
        Box::new(NullSink::default()),
        options,
    )
    .map_err(|e| e.to_string())?;
    let join = engine.spawn();
    let server = ControlServer::start(handle.clone(), "127.0.0.1:0".parse().unwrap(), None)
        .map_err(|e| e.to_string())?;
    let base = format!("http://{}", server.local_addr());

    let threads = 4;
    let per_thread = 250;
    let workers: Vec<_> = (0..threads)
        .map(|t| {
            let base = base.clone();
            std::thread::spawn(move || -> Result<(), String> {
                let agent: ureq::Agent = ureq::Agent::config_builder()
                    .http_status_as_error(false)
                    .timeout_global(Some(Duration::from_secs(20)))
                    .build()
                    .into();
                let mut rng = ChaCha8Rng::seed_from_u64(100 + t);
                for _ in 0..per_thread {
                    let (method, path) = match rng.gen_range(0..3) {
                        0 => ("POST", "/sleep"),
                        1 => ("POST", "/wake"),
                        _ => ("GET", "/health"),
                    };
                    let url = format!("{base}{path}");
                    let resp = if method == "POST" { agent.post(&url).send_empty() } else { agent.get(&url).call() };
                    let mut resp = resp.map_err(|e| format!("{method} {path}: {e}"))?;
                    let status = resp.status().as_u16();
                    let text = resp
                        .body_mut()
                        .read_to_string()
                        .map_err(|e| format!("{method} {path}: {e}"))?;
                    let body: Value = serde_json::from_str(&text).map_err(|e| format!("{method} {path}: {e}"))?;
                    let state = body["state"].as_str().unwrap_or_default();
                    if status != 200 || !matches!(state, "running" | "sleeping") {
                        return Err(format!("{method} {path}: {status} state {state:?}"));
                    }
                    if method == "POST" {
                        let want = if path == "/sleep" { "sleeping" } else { "running" };
                        if state != want {
                            return Err(format!("{path} answered state {state}"));
                        }
                    }
                }
                Ok(())
            })
        })
        .collect();
    let mut errors = Vec::new();
    for w in workers {
        match w.join() {
            Ok(Ok(())) => {}
            Ok(Err(e)) => errors.push(e),
            Err(_) => errors.push("worker panicked".into()),
        }
    }
    handle.notify(LifecycleEvent::ShutdownRequested);
    let summary = join.join().map_err(|_| "engine thread panicked".to_string())?;
    server.stop();
    let secs = started.elapsed().as_secs_f64();
    if !errors.is_empty() {
        return Err(format!("stress: {}", errors.join("; ")));
    }
    let legal = summary.transitions.iter().all(|t| {
        let (next, _) = expected_transition(&t.from, &t.event);
        next == t.to
    });
    let ok = legal && summary.fault.is_none() && summary.final_state == EngineState::ShuttingDown && secs < 60.0;
    let detail = format!(
        "{} HTTP ops over {threads} threads, {} transitions all legal: {legal}, final {}, {secs:.1}s",
        threads * per_thread,
        summary.transitions.len(),
        summary.final_state.name()
    );
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Outcome {
    let run = |dir: &std::path::Path| -> Result<Vec<Vec<u8>>, String> {
        let cfg = repo_config();
        let source = SyntheticSource::with_faces_dir(1920, 1080, 30, &data("faces"), 2, cfg.source.seed)
            .map_err(|e| e.to_string())?;
        let sink = PngSequenceSink::new(dir).map_err(|e| e.to_string())?;
        let options = EngineOptions {
            clock: ClockMode::Simulated,
            max_ticks: Some(300),
            shutdown_on_fault: true,
        };
        let (engine, _) = Engine::new(cfg, common::default_model(), Box::new(source), Box::new(sink), options)
            .map_err(|e| e.to_string())?;
        let summary = engine.run();
        if let Some(f) = summary.fault {
            return Err(f);
        }
        let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        Ok(files.iter().map(|p| std::fs::read(p).unwrap()).collect())
    };
    let a_dir = tempfile::tempdir().unwrap();
    let b_dir = tempfile::tempdir().unwrap();
    let a = run(a_dir.path())?;
    let b = run(b_dir.path())?;
    let first_diff = a.iter().zip(&b).position(|(x, y)| x != y);
    check(
        a.len() == 300 && b.len() == 300 && first_diff.is_none(),
        format!(
            "{} and {} PNG frames, first differing frame: {}",
            a.len(),
            b.len(),
            first_diff.map_or("none".to_string(), |i| i.to_string())
        ),
    )
}

fn random_premultiplied(rng: &mut ChaCha8Rng) -> [u8; 4] {
    let a: u8 = match rng.gen_range(0..8) {
        0 => 0,
        1 => 255,
        _ => rng.gen(),
    };
    [rng.gen_range(0..=a), rng.gen_range(0..=a), rng.gen_range(0..=a), a]
}

fn compositor_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let n = 100_000;
    for _ in 0..n {
        let mut top = random_premultiplied(&mut rng);
        top[3] = 255;
        let below = random_premultiplied(&mut rng);
        let wide = narrow(over_wide(widen(top), widen(below)));
        if over(top, below) != top || wide != top {
            return Err(format!("opaque {top:?} over {below:?} = {:?} / {wide:?}", over(top, below)));
        }
    }
    let (mut worst, mut worst_8bit) = (0u8, 0u8);
    for _ in 0..n {
        let [a, b, c] = [(); 3].map(|_| random_premultiplied(&mut rng));
        let (wa, wb, wc) = (widen(a), widen(b), widen(c));
        let left = narrow(over_wide(over_wide(wa, wb), wc));
        let right = narrow(over_wide(wa, over_wide(wb, wc)));
        let left8 = over(over(a, b), c);
        let right8 = over(a, over(b, c));
        for ch in 0..4 {
            worst = worst.max(left[ch].abs_diff(right[ch]));
            worst_8bit = worst_8bit.max(left8[ch].abs_diff(right8[ch]));
        }
    }
    check(
        worst <= 1,
        format!(
            "opaque dominance exact on {n} pixels; associativity max deviation {worst} LSB on {n} triples \
             (16-bit accumulator; {worst_8bit} LSB if rounded to 8 bits after every blend)"
        ),
    )
}
