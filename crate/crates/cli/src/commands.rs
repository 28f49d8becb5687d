use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use herald_core::correlator::{correlate_file, window_coincidences};
use herald_core::g2::heralded_g2;
use herald_core::generator::{simulate, simulate_with, tag_header, SimConfig};
use herald_core::presets::{
    expected_window_counts, histogram_check, measured_window_counts, Preset,
    HISTOGRAM_HALF_RANGE_PS, RESONANCE_WINDOW_PS,
};
use herald_core::resonance::{resonant_fraction, transmission_for_od};
use herald_core::spectral::{CorrelationCurve, CrossCorrelation};
use herald_core::tags::{read_tags, write_tags, TagWriter, TimeTag};

use crate::cli::{
    AnalyticArgs, CorrelateArgs, G2Args, PresetArgs, ResonanceArgs, SimulateArgs, TemplateArgs,
    OUTPUT_DIR_ENV,
};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::Manifest;

/// Output directory by precedence: flag, config file, environment,
/// current directory. Created if missing.
fn output_dir(flag: Option<&Path>, config: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = flag
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| CliError::output(&dir, e))?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::output(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::output(path, e))
}

pub fn analytic(args: AnalyticArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load_or_default(args.config.config.as_deref())?;
    let a = &mut config.analysis;
    a.curve_m_max = args.m_max.or(a.curve_m_max);
    a.curve_range_ns = args.range_ns.unwrap_or(a.curve_range_ns);
    a.curve_points = args.points.unwrap_or(a.curve_points);
    config.validate()?;
    let dir = output_dir(args.output.output_dir.as_deref(), &config)?;

    let a = &config.analysis;
    let cavity = &config.simulation.cavity;
    let m_max = a.curve_m_max.unwrap_or_else(|| config.simulation.m_max());
    let range = a.curve_range_ns * 1e-9;
    let mut files = Vec::new();
    for (name, m) in [
        ("analytic_multimode.csv", m_max),
        ("analytic_single_mode.csv", 0),
    ] {
        let model = CrossCorrelation::new(cavity, m)?;
        let curve =
            CorrelationCurve::from_model(&model, -range, range, a.curve_points).normalize()?;
        let path = dir.join(name);
        let mut out = create(&path)?;
        curve
            .write_csv(&mut out)
            .map_err(|e| CliError::output(&path, e))?;
        println!("{name}: m_max {m}, peak at {:.4e} s", curve.argmax());
        files.push(path);
    }
    let manifest = Manifest::new("analytic", &config).write(&dir, &files)?;
    println!("manifest: {}", manifest.display());
    Ok(())
}

fn print_stats(config: &SimConfig, stats: &herald_core::generator::SimStats) {
    println!("scenario = {}", config.scenario.letter());
    println!("rng_seed = {}", config.rng_seed);
    println!("expected_pairs = {:.6e}", stats.expected_pairs);
    println!("source_events = {}", stats.source_events);
    println!("tags_per_channel = {:?}", stats.tags_per_channel());
    println!("dark_tags = {:?}", stats.dark_tags);
    println!("dead_time_losses = {:?}", stats.dead_time_losses);
}

pub fn simulate_cmd(args: SimulateArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load_or_default(args.config.config.as_deref())?;
    if let Some(s) = args.scenario {
        config.simulation.scenario = s;
    }
    if let Some(seed) = args.seed {
        config.simulation.rng_seed = seed;
    }
    config.validate()?;
    let dir = output_dir(args.output.output_dir.as_deref(), &config)?;
    let sim = &config.simulation;
    let name = args
        .tags
        .unwrap_or_else(|| format!("scenario-{}.tags", sim.scenario.letter()).into());
    let path = dir.join(name);

    let mut writer =
        TagWriter::create(&path, tag_header(sim)).map_err(|e| CliError::output(&path, e))?;
    let stats = simulate_with(sim, |t| writer.write(t))?;
    writer.finish().map_err(|e| CliError::output(&path, e))?;

    println!("tags = {}", path.display());
    print_stats(sim, &stats);
    let manifest = Manifest::new("simulate", &config).write(&dir, &[path])?;
    println!("manifest = {}", manifest.display());
    Ok(())
}

pub fn correlate(args: CorrelateArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load_or_default(args.config.config.as_deref())?;
    let a = &mut config.analysis;
    a.ref_channel = args.ref_channel.unwrap_or(a.ref_channel);
    a.sig_channel = args.sig_channel.unwrap_or(a.sig_channel);
    a.bin_ns = args.bin_ns.unwrap_or(a.bin_ns);
    a.range_ns = args.range_ns.unwrap_or(a.range_ns);
    config.validate()?;
    let a = &config.analysis;
    let spec = a.histogram_spec().map_err(CliError::Config)?;

    let (_, histogram) = correlate_file(&args.tagfile, a.ref_channel, a.sig_channel, spec)?;
    let dir = output_dir(args.output.output_dir.as_deref(), &config)?;
    let path = dir.join(args.csv.unwrap_or_else(|| "histogram.csv".into()));
    let mut out = create(&path)?;
    histogram
        .write_csv(&mut out)
        .map_err(|e| CliError::output(&path, e))?;
    drop(out);

    println!("coincidences = {}", histogram.total());
    println!("ref_events = {}", histogram.n_ref_events);
    println!("sig_events = {}", histogram.n_sig_events);
    println!("bins = {}", histogram.counts.len());
    println!("histogram = {}", path.display());
    let mut manifest = Manifest::new("correlate", &config);
    manifest.add_input(&args.tagfile)?;
    let manifest = manifest.write(&dir, &[path])?;
    println!("manifest = {}", manifest.display());
    Ok(())
}

pub fn g2(args: G2Args) -> Result<(), CliError> {
    let mut config = RunConfig::load_or_default(args.config.config.as_deref())?;
    let a = &mut config.analysis;
    a.trigger_channel = args.trigger.unwrap_or(a.trigger_channel);
    a.arm_a_channel = args.arm_a.unwrap_or(a.arm_a_channel);
    a.arm_b_channel = args.arm_b.unwrap_or(a.arm_b_channel);
    a.window_ns = args.window_ns.unwrap_or(a.window_ns);
    a.max_window_ns = args.max_window_ns.unwrap_or(a.max_window_ns);
    a.extrapolation = args.model.unwrap_or(a.extrapolation);
    a.bunching_factor = args.bunching.unwrap_or(a.bunching_factor);
    config.validate()?;
    let opts = config.analysis.g2_options().map_err(CliError::Config)?;

    let (_, tags) = read_tags(&args.tagfile)?;
    let report = heralded_g2(&tags, &opts)?;
    print!("{}", report.to_text());
    if let Some(name) = args.n23_csv {
        let dir = output_dir(args.output.output_dir.as_deref(), &config)?;
        let path = dir.join(name);
        write_text(&path, &report.n23_csv())?;
        let mut manifest = Manifest::new("g2", &config);
        manifest.add_input(&args.tagfile)?;
        let manifest = manifest.write(&dir, &[path])?;
        println!("manifest = {}", manifest.display());
    }
    Ok(())
}

fn window_count(path: &Path, ch_ref: u8, ch_sig: u8, window_ps: u64) -> Result<u64, CliError> {
    let (header, tags) = read_tags(path)?;
    Ok(window_coincidences(
        &tags,
        header.channel_count,
        ch_ref,
        ch_sig,
        window_ps,
    )?)
}

pub fn resonance(args: ResonanceArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load_or_default(args.config.config.as_deref())?;
    let a = &mut config.analysis;
    a.od_low = args.od_low.unwrap_or(a.od_low);
    a.od_high = args.od_high.unwrap_or(a.od_high);
    a.window_ns = args.window_ns.unwrap_or(a.window_ns);
    a.ref_channel = args.ref_channel.unwrap_or(a.ref_channel);
    a.sig_channel = args.sig_channel.unwrap_or(a.sig_channel);
    config.validate()?;
    let a = &config.analysis;
    let window = a.window_ps().map_err(CliError::Config)?;

    let c_low = window_count(&args.low, a.ref_channel, a.sig_channel, window)?;
    let c_high = window_count(&args.high, a.ref_channel, a.sig_channel, window)?;
    let report = resonant_fraction(
        c_low as f64,
        c_high as f64,
        transmission_for_od(a.od_low),
        transmission_for_od(a.od_high),
    )?;
    println!("window_ps = {window}");
    print!("{}", report.to_text());
    Ok(())
}

fn write_run_tags(
    dir: &Path,
    name: &str,
    config: &SimConfig,
    tags: &[TimeTag],
) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    write_tags(&path, tag_header(config), tags).map_err(|e| CliError::output(&path, e))?;
    Ok(path)
}

pub fn preset(args: PresetArgs) -> Result<(), CliError> {
    let configs = args.name.configs(args.seed);
    let base = RunConfig {
        simulation: configs[0].clone(),
        ..RunConfig::default()
    };
    let dir = output_dir(args.output.output_dir.as_deref(), &base)?;
    let name = args.name.name();
    let mut files = Vec::new();
    let mut report = format!("preset = {name}\nrng_seed = {}\n", args.seed);

    match args.name {
        Preset::Fig2 | Preset::Fig3 => {
            let config = &configs[0];
            let out = simulate(config)?;
            files.push(write_run_tags(
                &dir,
                &format!("{name}.tags"),
                config,
                &out.tags,
            )?);
            let check = histogram_check(config, &out.tags, 1, HISTOGRAM_HALF_RANGE_PS)?;
            let csv = dir.join(format!("{name}_histogram.csv"));
            write_text(&csv, &check.to_csv())?;
            files.push(csv);
            report.push_str(&check.to_text());
        }
        Preset::Fig4 => {
            let mut counts = Vec::new();
            for config in &configs {
                let out = simulate(config)?;
                let tag_name = format!("{name}_od{}.tags", config.cell.od);
                files.push(write_run_tags(&dir, &tag_name, config, &out.tags)?);
                let measured = measured_window_counts(config, &out.tags, RESONANCE_WINDOW_PS)?;
                let expected = expected_window_counts(config, RESONANCE_WINDOW_PS)?;
                report.push_str(&format!(
                    "od {}: in-window coincidences {measured}, model {:.1} \
                     ({:.1} correlated, {:.1} accidental)\n",
                    config.cell.od,
                    expected.total(),
                    expected.correlated,
                    expected.accidental
                ));
                counts.push((measured as f64, expected.total()));
            }
            let (low, high) = (&configs[0], &configs[1]);
            report.push_str(&format!("model_ratio = {:.4}\n", counts[0].1 / counts[1].1));
            let fraction = resonant_fraction(
                counts[0].0,
                counts[1].0,
                transmission_for_od(low.cell.od),
                transmission_for_od(high.cell.od),
            )?;
            report.push_str(&fraction.to_text());
        }
        Preset::G2Table => {
            let config = &configs[0];
            let out = simulate(config)?;
            files.push(write_run_tags(
                &dir,
                &format!("{name}.tags"),
                config,
                &out.tags,
            )?);
            let g2 = heralded_g2(&out.tags, &Default::default())?;
            let csv = dir.join(format!("{name}_n23.csv"));
            write_text(&csv, &g2.n23_csv())?;
            files.push(csv);
            report.push_str(&g2.to_text());
        }
    }
    let report_path = dir.join(format!("{name}_report.txt"));
    write_text(&report_path, &report)?;
    files.push(report_path);
    print!("{report}");
    let manifest = Manifest::new(&format!("preset-{name}"), &base).write(&dir, &files)?;
    println!("manifest = {}", manifest.display());
    Ok(())
}

pub fn config_template(args: TemplateArgs) -> Result<(), CliError> {
    let config = RunConfig {
        simulation: args
            .preset
            .map_or_else(SimConfig::default, |p| p.configs(1)[0].clone()),
        ..RunConfig::default()
    };
    let mut out = std::io::stdout().lock();
    let text = format!(
        "# herald run configuration. Units: seconds and Hz under [simulation],\n\
         # ns under [analysis]. Unknown keys are rejected.\n\
         # An empty detectors list applies the default detector to every channel.\n\n{}",
        config.to_toml()
    );
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Output(e.to_string()))
}
