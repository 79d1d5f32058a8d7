//! Command-line front end: `run` executes a workload spec against a heap
//! configuration and writes the GC log and report, `compare` builds a ratio
//! table from two run logs, `profile` runs with the lifetime profiler and
//! emits a pretenuring recommendation, and `selftest` executes a quick
//! invariant suite.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::heap::{Heap, HeapConfig};
use crate::profiler::{render_recommendation, Profiler};
use crate::workload::{
    compare_report, metrics_from_log, parse_run_log, render_comparison_text,
    render_metrics_text, render_run_log, run_workload, run_workload_with, WorkloadSpec,
};

#[derive(Parser, Debug)]
#[command(
    name = "ngen-gc",
    about = "N-generational pretenuring GC simulator and workload harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a workload spec and emit a GC log and metrics report.
    Run(RunArgs),
    /// Compare two run logs from the same experiment (ratios are b over a).
    Compare(CompareArgs),
    /// Run a workload under the lifetime profiler and emit a pretenuring
    /// recommendation (the run itself is forced to baseline mode).
    Profile(ProfileArgs),
    /// Exercise the invariant suite; exits nonzero on any failure.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Structured,
}

#[derive(Args, Debug)]
struct HeapFlags {
    /// Total heap size in bytes.
    #[arg(long = "heap-bytes")]
    heap_bytes: Option<u64>,
    /// Region size in bytes.
    #[arg(long = "region-bytes")]
    region_bytes: Option<u64>,
    /// Gen 0 Eden cap in bytes.
    #[arg(long = "gen0-bytes")]
    gen0_bytes: Option<u64>,
    /// TLAB reservation size in bytes.
    #[arg(long = "tlab-bytes")]
    tlab_bytes: Option<u64>,
    /// Collections survived before promotion out of Gen 0.
    #[arg(long = "promotion-age")]
    promotion_age: Option<u32>,
    /// Heap occupancy fraction that arms mixed collections.
    #[arg(long = "mixed-occupancy")]
    mixed_occupancy: Option<f64>,
    /// Max live fraction for a region to enter a mixed collection set.
    #[arg(long = "live-threshold")]
    live_threshold: Option<f64>,
    /// Cost-units per remembered-set entry in the pause cost model.
    #[arg(long = "alpha")]
    alpha: Option<f64>,
}

impl HeapFlags {
    fn config(&self) -> HeapConfig {
        let mut cfg = HeapConfig::default();
        if let Some(v) = self.heap_bytes {
            cfg.heap_bytes = v;
        }
        if let Some(v) = self.region_bytes {
            cfg.region_bytes = v;
        }
        if let Some(v) = self.gen0_bytes {
            cfg.gen0_max_bytes = v;
        }
        if let Some(v) = self.tlab_bytes {
            cfg.tlab_bytes = v;
        }
        if let Some(v) = self.promotion_age {
            cfg.promotion_age = v;
        }
        if let Some(v) = self.mixed_occupancy {
            cfg.mixed_trigger_occupancy = v;
        }
        if let Some(v) = self.live_threshold {
            cfg.region_live_threshold = v;
        }
        if let Some(v) = self.alpha {
            cfg.pause_cost_alpha = v;
        }
        cfg
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Workload spec file (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the spec's pretenure flag.
    #[arg(long, value_parser = parse_on_off)]
    pretenure: Option<bool>,
    /// Output prefix: writes <out>.gclog and <out>.report.{txt,json}.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(flatten)]
    heap: HeapFlags,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Baseline run log (the `a` side).
    log_a: PathBuf,
    /// Candidate run log (the `b` side).
    log_b: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Also write the table to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Median lifetime (epochs) from which a site counts as long-lived.
    #[arg(long = "long-lived", default_value_t = 4)]
    long_lived: u64,
    /// Max gap between median death epochs within one cohort.
    #[arg(long = "cohort-tolerance", default_value_t = 2)]
    cohort_tolerance: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(flatten)]
    heap: HeapFlags,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    /// Also run the informational Gen 0 size sweep.
    #[arg(long)]
    sweep: bool,
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected 'on' or 'off', got {other:?}")),
    }
}

struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> CliError {
        CliError {
            code: 2,
            message: message.into(),
        }
    }
    fn runtime(message: impl Into<String>) -> CliError {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

/// Entry point used by the `ngen-gc` binary; returns the process exit code.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own message and distinguishes --help/--version
            // (exit 0) from usage errors (exit 2).
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Profile(args) => cmd_profile(args),
        Command::Selftest(args) => cmd_selftest(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("ngen-gc: error: {}", e.message);
            e.code
        }
    }
}

fn load_spec(path: &Path, seed: Option<u64>, pretenure: Option<bool>) -> Result<WorkloadSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read spec file {}: {e}", path.display())))?;
    let mut spec = WorkloadSpec::from_toml_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    if let Some(pretenure) = pretenure {
        spec.pretenure = pretenure;
    }
    Ok(spec)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> Result<i32, CliError> {
    let spec = load_spec(&args.spec, args.seed, args.pretenure)?;
    let config = args.heap.config();
    config
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let output = run_workload(&spec, &config).map_err(|e| CliError::runtime(e.to_string()))?;

    let report_text = match args.format {
        Format::Text => render_metrics_text(&output.metrics),
        Format::Structured => {
            serde_json::to_string_pretty(&output.metrics).expect("report serialization")
        }
    };
    if let Some(out) = &args.out {
        let log_path = out.with_extension("gclog");
        write_file(&log_path, &render_run_log(&output))?;
        let report_path = match args.format {
            Format::Text => out.with_extension("report.txt"),
            Format::Structured => out.with_extension("report.json"),
        };
        write_file(&report_path, &report_text)?;
        println!(
            "wrote {} ({} collections) and {}",
            log_path.display(),
            output.reports.len(),
            report_path.display()
        );
    } else {
        print!("{report_text}");
    }
    if output.aborted {
        eprintln!("ngen-gc: run aborted: out of memory; partial report flagged invalid");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_compare(args: CompareArgs) -> Result<i32, CliError> {
    let read = |p: &Path| -> Result<_, CliError> {
        let text = std::fs::read_to_string(p)
            .map_err(|e| CliError::usage(format!("cannot read log {}: {e}", p.display())))?;
        parse_run_log(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
    };
    let a = metrics_from_log(&read(&args.log_a)?);
    let b = metrics_from_log(&read(&args.log_b)?);
    let table = compare_report(&a, &b).map_err(|e| CliError::usage(e.to_string()))?;
    let text = match args.format {
        Format::Text => render_comparison_text(&table),
        Format::Structured => serde_json::to_string_pretty(&table).expect("table serialization"),
    };
    if let Some(out) = &args.out {
        write_file(out, &text)?;
    }
    print!("{text}");
    Ok(0)
}

fn cmd_profile(args: ProfileArgs) -> Result<i32, CliError> {
    let mut spec = load_spec(&args.spec, args.seed, None)?;
    // Profiling observes the unmodified application: baseline placement.
    spec.pretenure = false;
    let config = args.heap.config();
    config
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let profiler = Arc::new(Profiler::new(true));
    let output = run_workload_with(&spec, &config, Some(profiler.clone()))
        .map_err(|e| CliError::runtime(e.to_string()))?;
    if output.aborted {
        eprintln!("ngen-gc: profiling run aborted: out of memory");
        return Ok(1);
    }
    let rec = profiler
        .analyze(args.long_lived, args.cohort_tolerance)
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let text = match args.format {
        Format::Text => render_recommendation(&rec),
        Format::Structured => {
            #[derive(serde::Serialize)]
            struct StructuredRec<'a> {
                groups: Vec<StructuredGroup<'a>>,
                pretenure_sites: &'a [String],
            }
            #[derive(serde::Serialize)]
            struct StructuredGroup<'a> {
                label: &'a str,
                median_death_epoch: f64,
                sites: &'a [String],
            }
            let s = StructuredRec {
                groups: rec
                    .groups
                    .iter()
                    .map(|g| StructuredGroup {
                        label: &g.label,
                        median_death_epoch: g.median_death_epoch,
                        sites: &g.sites,
                    })
                    .collect(),
                pretenure_sites: &rec.pretenure_sites,
            };
            serde_json::to_string_pretty(&s).expect("recommendation serialization")
        }
    };
    if let Some(out) = &args.out {
        write_file(out, &text)?;
    }
    print!("{text}");
    Ok(0)
}

// ── selftest ───────────────────────────────────────────────────────────

fn cmd_selftest(args: SelftestArgs) -> Result<i32, CliError> {
    let mut failures = 0;
    let mut check = |name: &str, result: Result<(), String>| match result {
        Ok(()) => println!("PASS {name}"),
        Err(msg) => {
            failures += 1;
            println!("FAIL {name}: {msg}");
        }
    };

    check("region-partition-invariant", selftest_partition());
    check("allocation-routing-invariant", selftest_routing());
    check("remembered-set-exactness", selftest_rsets());
    check("generation-lifecycle", selftest_lifecycle());
    check("deterministic-logs", selftest_determinism());
    check("mutator-equivalence", selftest_equivalence());
    check("concurrent-allocation", selftest_concurrency());

    if args.sweep {
        print_gen0_sweep();
    }
    if failures > 0 {
        return Err(CliError::runtime(format!("{failures} selftest check(s) failed")));
    }
    println!("selftest: all checks passed");
    Ok(0)
}

fn small_config() -> HeapConfig {
    HeapConfig {
        heap_bytes: 8 << 20,
        region_bytes: 16 << 10,
        gen0_max_bytes: 1 << 20,
        tlab_bytes: 1024,
        ..HeapConfig::default()
    }
}

fn small_buffer_spec(seed: u64, pretenure: bool) -> WorkloadSpec {
    use crate::workload::*;
    WorkloadSpec {
        kind: WorkloadKind::Buffer,
        duration_ops: 20_000,
        seed,
        pretenure,
        op_mix: OpMix {
            read: 0.25,
            write: 0.75,
        },
        object_size: ObjectSizeDist {
            min_bytes: 64,
            max_bytes: 256,
            dist: SizeDist::Uniform,
        },
        retention: Retention {
            cohort_bytes: 128 << 10,
            request_bytes: 512,
            ..Retention::default()
        },
    }
}

fn selftest_partition() -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    let heap = Heap::new(small_config()).map_err(|e| e.to_string())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let mut ctx = crate::allocator::ThreadContext::new(&heap);
    let class = heap.register_class(1, 80, false);
    let mut handles = Vec::new();
    for i in 0..3000 {
        if rng.gen_bool(0.3) {
            crate::allocator::new_generation(&heap, &mut ctx);
        }
        let obj = ctx
            .allocate(&heap, class, rng.gen_bool(0.5))
            .map_err(|e| e.to_string())?;
        if rng.gen_bool(0.2) {
            handles.push(heap.register_root(obj).map_err(|e| e.to_string())?);
        }
        if i % 500 == 499 && !heap.check_region_partition() {
            return Err(format!("partition invariant broken at op {i}"));
        }
    }
    crate::collector::full_collect(&heap).map_err(|e| e.to_string())?;
    if !heap.check_region_partition() {
        return Err("partition invariant broken after full collection".into());
    }
    Ok(())
}

fn selftest_routing() -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    let heap = Heap::new(small_config()).map_err(|e| e.to_string())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut ctx = crate::allocator::ThreadContext::new(&heap);
    let class = heap.register_class(0, 48, false);
    for _ in 0..500 {
        if rng.gen_bool(0.1) {
            crate::allocator::new_generation(&heap, &mut ctx);
        }
        let pretenure = rng.gen_bool(0.5);
        let expected = if pretenure {
            crate::allocator::get_generation(&ctx)
        } else {
            crate::heap::GEN0
        };
        let obj = ctx
            .allocate(&heap, class, pretenure)
            .map_err(|e| e.to_string())?;
        let owner = heap.dump().regions[obj.region as usize].owner;
        if owner != Some(expected) {
            return Err(format!("object routed to {owner:?}, expected generation {expected}"));
        }
    }
    Ok(())
}

fn selftest_rsets() -> Result<(), String> {
    use rand::{Rng, SeedableRng};
    let heap = Heap::new(small_config()).map_err(|e| e.to_string())?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
    let mut ctx = crate::allocator::ThreadContext::new(&heap);
    let class = heap.register_class(2, 16, false);
    let mut objs = Vec::new();
    for i in 0..200u64 {
        let pretenure = i % 3 == 0;
        if i % 40 == 0 {
            crate::allocator::new_generation(&heap, &mut ctx);
        }
        objs.push(
            ctx.allocate(&heap, class, pretenure)
                .map_err(|e| e.to_string())?,
        );
    }
    for _ in 0..400 {
        let a = objs[rng.gen_range(0..objs.len())];
        let b = objs[rng.gen_range(0..objs.len())];
        let slot = rng.gen_range(0..2);
        heap.write_ref(a, slot, Some(b)).map_err(|e| e.to_string())?;
    }
    // Full-slot scan oracle over the dump.
    heap.retire_all_tlabs();
    let dump = heap.dump();
    let mut expected: std::collections::BTreeMap<u32, std::collections::BTreeMap<u32, u64>> =
        Default::default();
    for region in &dump.regions {
        for (off, class_id, _size) in region.object_extents() {
            if class_id == crate::object_model::FILLER_CLASS {
                continue;
            }
            let desc = &dump.classes[class_id as usize];
            for slot in 0..desc.ref_slot_count {
                let word = region.words[(off / 8 + 2 + slot) as usize];
                if let Some(t) = crate::heap::decode_slot_word(word) {
                    if t.region != region.id {
                        *expected
                            .entry(t.region)
                            .or_default()
                            .entry(region.id)
                            .or_insert(0) += 1;
                    }
                }
            }
        }
    }
    for region in &dump.regions {
        let want: Vec<(u32, u64)> = expected
            .get(&region.id)
            .map(|m| m.iter().map(|(&s, &n)| (s, n)).collect())
            .unwrap_or_default();
        if region.rset != want {
            return Err(format!(
                "region {} remembered set {:?} != slot-scan {:?}",
                region.id, region.rset, want
            ));
        }
    }
    Ok(())
}

fn selftest_lifecycle() -> Result<(), String> {
    let heap = Heap::new(small_config()).map_err(|e| e.to_string())?;
    let mut ctx = crate::allocator::ThreadContext::new(&heap);
    let gen = crate::allocator::new_generation(&heap, &mut ctx);
    let class = heap.register_class(0, 3000, false);
    let h = heap
        .register_root(ctx.allocate(&heap, class, true).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    heap.unregister_root(h).map_err(|e| e.to_string())?;
    crate::collector::run_marking(&heap);
    crate::collector::mixed_collect(&heap).map_err(|e| e.to_string())?;
    if !heap.generation_info(gen).map_err(|e| e.to_string())?.discarded {
        return Err("generation not discarded after its data died".into());
    }
    crate::allocator::set_generation(&heap, &mut ctx, gen).map_err(|e| e.to_string())?;
    ctx.allocate(&heap, class, true).map_err(|e| e.to_string())?;
    let info = heap.generation_info(gen).map_err(|e| e.to_string())?;
    if info.discarded || info.regions.is_empty() {
        return Err("generation not re-created on allocation".into());
    }
    Ok(())
}

fn selftest_determinism() -> Result<(), String> {
    let spec = small_buffer_spec(99, true);
    let config = small_config();
    let a = run_workload(&spec, &config).map_err(|e| e.to_string())?;
    let b = run_workload(&spec, &config).map_err(|e| e.to_string())?;
    if render_run_log(&a) != render_run_log(&b) {
        return Err("two identical runs produced different GC logs".into());
    }
    Ok(())
}

fn selftest_equivalence() -> Result<(), String> {
    let config = small_config();
    let base = run_workload(&small_buffer_spec(7, false), &config).map_err(|e| e.to_string())?;
    let pre = run_workload(&small_buffer_spec(7, true), &config).map_err(|e| e.to_string())?;
    if base.fingerprints != pre.fingerprints {
        return Err("object graph diverged between baseline and pretenured runs".into());
    }
    Ok(())
}

fn selftest_concurrency() -> Result<(), String> {
    let report = crate::workload::multi_mutator_exercise(&small_config(), 4, 2000, 1234)
        .map_err(|e| e.to_string())?;
    if report.objects_allocated != 8000 {
        return Err(format!(
            "expected 8000 objects, found {}",
            report.objects_allocated
        ));
    }
    Ok(())
}

fn print_gen0_sweep() {
    println!("\ninformational gen0 sweep (buffer workload, cost units):");
    println!(
        "{:>12} {:>12} {:>16} {:>16} {:>12}",
        "gen0_bytes", "collections", "pause_p100", "pause_p50", "ops/sec"
    );
    for gen0_mib in [2u64, 4, 8, 16] {
        let config = HeapConfig {
            gen0_max_bytes: gen0_mib << 20,
            ..HeapConfig::default()
        };
        let spec = {
            let mut s = small_buffer_spec(42, true);
            s.duration_ops = 60_000;
            s
        };
        match run_workload(&spec, &config) {
            Ok(out) => println!(
                "{:>12} {:>12} {:>16.1} {:>16.1} {:>12.0}",
                config.gen0_max_bytes,
                out.metrics.collections,
                out.metrics.pause_cost_percentiles.p100,
                out.metrics.pause_cost_percentiles.p50,
                out.metrics.throughput_ops_per_sec
            ),
            Err(e) => println!("{:>12} run failed: {e}", config.gen0_max_bytes),
        }
    }
}
