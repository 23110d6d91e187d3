use wskit::acceptance::run_all;

fn main() {
    let seed = std::env::var("WSKIT_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let outcomes = run_all(seed);
    let mut failed = 0;
    for o in &outcomes {
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {:>2}: {} ({:.3}s)", o.id, o.name, o.elapsed.as_secs_f64());
        if !o.pass {
            println!("        {}", o.details);
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
