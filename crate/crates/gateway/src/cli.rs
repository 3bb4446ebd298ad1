//! The `ww` command line.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use ww_core::signal::{decompose_speech, synthesize_waveset, DEFAULT_OUT_RATE};
use ww_core::watersim::{self, render_frame, write_png, write_wwf};
use ww_core::wav::{read_wav, write_wav_samples, WavEncoding};
use ww_core::signal::ChannelWaveform;
use ww_engine::ritual::{open_record, EncryptedRecord, RitualSession, SealKey, SEAL_KEY_ENV};

use crate::config::EngineConfig;
use crate::error::GatewayError;
use crate::runner::{load_confession, ArtifactHost, KeySource, Services, CHANNEL_FILES, FRAMES_FILE, SEALED_DIR, TRANSCRIPT_FILE, WAVESET_FILE};
use crate::server::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "ww", version, about = "Confession in, water patterns out")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one full session on a .txt or .wav confession.
    Run(RunArgs),
    /// Decompose a WAV into six channel components; writes waveset.json and ch1.wav..ch6.wav.
    Decompose(DecomposeArgs),
    /// Drive the tank with ch1.wav..ch6.wav from a directory.
    Simulate(SimulateArgs),
    /// Sealed-record maintenance.
    #[command(subcommand)]
    Wwr(WwrCommand),
    /// Start the HTTP session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use seeded offline providers for everything.
    #[arg(long)]
    pub mock: bool,
    /// Seed for the mock chat provider.
    #[arg(long, default_value_t = 0, requires = "mock")]
    pub seed: u64,
    /// Write frames.wwf.
    #[arg(long)]
    pub frames: bool,
    /// Also write one grayscale PNG per frame (implies --frames).
    #[arg(long)]
    pub png: bool,
    /// Output directory (defaults to the config's output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print session events as JSON lines on stdout.
    #[arg(long)]
    pub follow: bool,
    /// Write the pre-seal transcript to transcript.json.
    #[arg(long, requires = "mock")]
    pub unsafe_plaintext: bool,
}

#[derive(Debug, Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory holding ch1.wav..ch6.wav.
    #[arg(long)]
    pub channels: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Defaults to the channel directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Subcommand)]
pub enum WwrCommand {
    /// Decrypt a .wwr record with the key in WW_SEAL_KEY and print the
    /// session JSON.
    Decrypt {
        file: PathBuf,
        /// Use the public mock key instead of WW_SEAL_KEY.
        #[arg(long)]
        mock_key: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mock: bool,
    #[arg(long, default_value_t = 0, requires = "mock")]
    pub seed: u64,
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig, GatewayError> {
    match path {
        Some(p) => EngineConfig::load(p),
        None => Ok(EngineConfig::default()),
    }
}

fn warn_key(source: KeySource) {
    match source {
        KeySource::MockFallback => eprintln!(
            "warning: {SEAL_KEY_ENV} is not set; sealing with the public mock key (records are not private)"
        ),
        KeySource::Missing => eprintln!("warning: {SEAL_KEY_ENV} is not set; sessions will be discarded at release"),
        KeySource::Environment => {}
    }
}

pub async fn execute(cli: Cli) -> Result<(), GatewayError> {
    match cli.command {
        Command::Run(args) => run(args).await,
        Command::Decompose(args) => decompose(args),
        Command::Simulate(args) => simulate(args),
        Command::Wwr(WwrCommand::Decrypt { file, mock_key, out }) => decrypt(&file, mock_key, out.as_deref()),
        Command::Serve(args) => serve(args).await,
    }
}

async fn run(args: RunArgs) -> Result<(), GatewayError> {
    let config = load_config(args.config.as_deref())?;
    let mut services = Services::build(config, args.mock.then_some(args.seed))?;
    warn_key(services.key_source);
    let want_frames = args.frames || args.png;
    if !want_frames {
        services.deps.frame_rate = 0;
    } else if services.deps.frame_rate == 0 {
        return Err(GatewayError::Config("--frames needs a non-zero frame_rate".into()));
    }
    services.deps.export_plaintext = args.mock && args.unsafe_plaintext;

    let confession = load_confession(&args.input, services.asr.as_ref()).await?;
    let out = args.out.unwrap_or_else(|| services.config.output_dir.clone());
    let sealed_dir = services.config.retain_sealed.then(|| out.join(SEALED_DIR));
    let follow = args.follow;
    let sink = move |event: ww_engine::ritual::SessionEvent| {
        if follow {
            let mut stdout = std::io::stdout().lock();
            let _ = serde_json::to_writer(&mut stdout, &event);
            let _ = writeln!(stdout);
        }
    };
    let deps = &services.deps;
    let mut host = ArtifactHost::new(&out, sealed_dir, sink)?;
    if want_frames {
        host = host.with_frames(deps.tank.grid_nx, deps.tank.grid_ny, deps.frame_rate)?;
    }
    if args.png {
        host = host.with_png()?;
    }
    let outcome = deps.run(RitualSession::new(), confession, &mut host).await?;

    if let Some(transcript) = &outcome.plaintext_transcript {
        std::fs::write(out.join(TRANSCRIPT_FILE), serde_json::to_vec_pretty(transcript)?)?;
    }
    let record = match (&outcome.record, services.config.retain_sealed) {
        (Some(r), true) => Some(out.join(SEALED_DIR).join(format!("{}.wwr", r.session_id))),
        _ => None,
    };
    let summary = json!({
        "session_id": outcome.session.session_id,
        "sealed": outcome.session.is_sealed(),
        "discarded": outcome.session.is_discarded(),
        "duration_seconds": outcome.timeline.duration_seconds(),
        "frames": outcome.frame_count,
        "reached_stillness": outcome.reached_stillness,
        "final_rms": outcome.final_rms,
        "record": record,
        "out": out,
    });
    if !follow {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    if !outcome.session.is_sealed() {
        return Err(GatewayError::Engine(ww_engine::EngineError::SealFailed(format!(
            "no seal key ({SEAL_KEY_ENV} unset); session discarded"
        ))));
    }
    Ok(())
}

fn decompose(args: DecomposeArgs) -> Result<(), GatewayError> {
    let audio = read_wav(&args.input)?;
    let waveset = decompose_speech(&audio)?;
    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join(WAVESET_FILE);
    let summary = waveset.summary();
    std::fs::write(&path, serde_json::to_vec_pretty(&summary)?)?;
    for ch in synthesize_waveset(&waveset, DEFAULT_OUT_RATE)? {
        write_wav_samples(args.out.join(CHANNEL_FILES[(ch.channel - 1) as usize]), &ch.samples, ch.sample_rate, WavEncoding::Float32)?;
    }
    println!("{}", serde_json::to_string(&json!({"f0_hz": summary.f0_hz, "waveset": path}))?);
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), GatewayError> {
    let config = load_config(args.config.as_deref())?;
    let mut channels = Vec::with_capacity(6);
    for (k, name) in CHANNEL_FILES.iter().enumerate() {
        let audio = read_wav(args.channels.join(name))?;
        channels.push(ChannelWaveform {
            channel: k as u8 + 1,
            sample_rate: audio.sample_rate(),
            samples: audio.into_samples(),
        });
    }
    let frame_rate = config.frame_rate.max(1);
    let seq = watersim::run(&config.tank, &channels, frame_rate)?;
    let out = args.out.unwrap_or(args.channels);
    std::fs::create_dir_all(&out)?;
    write_wwf(out.join(FRAMES_FILE), &seq)?;
    if args.png {
        let dir = out.join("frames");
        std::fs::create_dir_all(&dir)?;
        for (i, frame) in seq.frames.iter().enumerate() {
            write_png(dir.join(format!("frame_{i:05}.png")), &render_frame(&frame.data, seq.nx, seq.ny))?;
        }
    }
    let last_rms = seq.frames.last().map_or(0.0, |f| f.rms());
    println!(
        "{}",
        serde_json::to_string(&json!({"frames": seq.frames.len(), "nx": seq.nx, "ny": seq.ny, "frame_rate": frame_rate, "final_rms": last_rms}))?
    );
    Ok(())
}

fn decrypt(file: &Path, mock_key: bool, out: Option<&Path>) -> Result<(), GatewayError> {
    let key = if mock_key {
        SealKey::mock()
    } else {
        SealKey::from_env()?.ok_or_else(|| GatewayError::Config(format!("{SEAL_KEY_ENV} is not set")))?
    };
    let session_id = file
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| GatewayError::Input(format!("{}: cannot derive a session id", file.display())))?;
    let bytes = std::fs::read(file)?;
    let record = EncryptedRecord::from_bytes(session_id, &bytes)?;
    let plaintext = open_record(&record, &key)?;
    match out {
        Some(path) => std::fs::write(path, plaintext.as_slice())?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(&plaintext)?;
            writeln!(stdout)?;
        }
    }
    Ok(())
}

async fn serve(args: ServeArgs) -> Result<(), GatewayError> {
    let config = load_config(args.config.as_deref())?;
    let services = Services::build(config, args.mock.then_some(args.seed))?;
    warn_key(services.key_source);
    let output_dir = services.config.output_dir.clone();
    std::fs::create_dir_all(&output_dir)?;
    let listener = tokio::net::TcpListener::bind(&args.addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    server::serve(listener, AppState::new(services, output_dir)).await?;
    Ok(())
}
