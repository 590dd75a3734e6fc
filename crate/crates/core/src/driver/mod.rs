//! End-to-end federation runs.
//!
//! Every client runs on its own thread and talks to a server thread through
//! byte channels carrying exactly what would go over a network: attestation
//! frames first, then one sealed upload and one sealed download per client per
//! aggregating round. The server waits for all uploads of a round before it
//! aggregates, and always combines them in client-id order.

mod compare;
mod timing;

pub use compare::{compare_modes, ComparisonRow, ComparisonTable, ModeRoundSummary};
pub use timing::{predicted_total_time, TimingModelInput};

use std::collections::BTreeMap;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::clustering::{do_clustering, membership_agreement, recluster, refit, ModelClustering};
use crate::data::{Dataset, FederatedData};
use crate::dp::{privatize_update, DpConfig};
use crate::error::{Error, Result};
use crate::model::{fedavg, model_byte_size, LayeredModel};
use crate::protocol::{
    aggregate_centroids, approximation_error, compute_difference, estimate_global_model,
    CentroidSet, ErrorReport,
};
use crate::trainer::{eval_loss, init_mlp, LocalTrainer, TrainerSpec};
use crate::transport::{
    decode_frame, encode_frame, frame_nonce, AttestationClient, AttestationServer, CentroidFrame,
    Direction, FrameMeta, LedgerEntry, MsgType, SealingChannel, TransmissionLedger,
};

pub const DEFAULT_SECRET: &str = "fixed-enclave-sealing-key";
const CHANNEL_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Exchange per-layer k-means centroids and estimate the global model locally.
    Centroid,
    FedAvg,
    DpFedAvg,
    NoAggregation,
}

/// Where each aggregating round's partition of layer rows comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionPolicy {
    /// k-means on the common initial model once; later rounds keep that
    /// partition and recompute centroids from the local weights.
    #[default]
    Fixed,
    /// Lloyd iterations started from the client's previous partition.
    Warm,
    /// Fresh seeded k-means++ on the local weights every round.
    Cold,
}

impl std::str::FromStr for PartitionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "warm" => Ok(Self::Warm),
            "cold" => Ok(Self::Cold),
            other => Err(Error::InvalidArgument(format!(
                "unknown partition policy `{other}`"
            ))),
        }
    }
}

impl std::fmt::Display for PartitionPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fixed => "fixed",
            Self::Warm => "warm",
            Self::Cold => "cold",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "centroid" => Ok(Self::Centroid),
            "fedavg" => Ok(Self::FedAvg),
            "dp-fedavg" => Ok(Self::DpFedAvg),
            "no-aggregation" => Ok(Self::NoAggregation),
            other => Err(Error::InvalidArgument(format!("unknown mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Centroid => "centroid",
            Self::FedAvg => "fedavg",
            Self::DpFedAvg => "dp-fedavg",
            Self::NoAggregation => "no-aggregation",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationConfig {
    pub clients: usize,
    pub rounds: u32,
    pub agg_every: u32,
    pub beta: f64,
    pub seed: u64,
    pub trainer: TrainerSpec,
    pub dp: Option<DpConfig>,
    pub mode: Mode,
    pub partition: PartitionPolicy,
    /// Hidden layer widths of the MLP every client starts from.
    pub hidden: Vec<usize>,
    pub secret: String,
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 {
            return Err(Error::InvalidArgument("n (clients) must be >= 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be >= 1".into()));
        }
        if self.agg_every == 0 || self.agg_every > self.rounds {
            return Err(Error::InvalidArgument(format!(
                "agg_fr must be in [1, rounds={}], got {}",
                self.rounds, self.agg_every
            )));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "beta must be in (0, 1], got {}",
                self.beta
            )));
        }
        self.trainer.validate()?;
        match (&self.dp, self.mode) {
            (None, Mode::DpFedAvg) => {
                return Err(Error::InvalidArgument(
                    "dp-fedavg mode needs a dp config".into(),
                ))
            }
            (Some(dp), _) => dp.validate()?,
            _ => {}
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be >= 1".into()));
        }
        if u32::try_from(self.clients).is_err() {
            return Err(Error::InvalidArgument("too many clients".into()));
        }
        Ok(())
    }

    pub fn is_aggregation_round(&self, round: u32) -> bool {
        self.mode != Mode::NoAggregation && round.is_multiple_of(self.agg_every)
    }

    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(&self.hidden);
        w.push(1);
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientRoundMetrics {
    pub client_id: usize,
    pub eval_loss: f64,
    /// Sealed bytes this client uploaded in the round.
    pub tx_bytes: usize,
    pub rx_bytes: usize,
    /// f64 payload bytes inside the upload, headers excluded.
    pub payload_bytes: usize,
    pub t_local_s: f64,
    pub t_cluster_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: u32,
    pub aggregated: bool,
    pub clients: Vec<ClientRoundMetrics>,
    pub t_agg_s: f64,
    /// Approximation error against FedAvg of the pre-aggregation models (centroid mode).
    pub error: Option<ErrorReport>,
    /// Largest gap between the client mean after aggregation and FedAvg before it.
    pub mean_gap: Option<f64>,
    /// Lowest fraction of rows any client labels the same way as client 0 (centroid mode).
    pub membership_agreement: Option<f64>,
}

impl RoundReport {
    pub fn loss_spread(&self) -> f64 {
        let (lo, hi) = self
            .clients
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                (lo.min(c.eval_loss), hi.max(c.eval_loss))
            });
        hi - lo
    }

    pub fn mean_loss(&self) -> f64 {
        self.clients.iter().map(|c| c.eval_loss).sum::<f64>() / self.clients.len() as f64
    }

    pub fn tx_bytes(&self) -> usize {
        self.clients.iter().map(|c| c.tx_bytes).sum()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub reports: Vec<RoundReport>,
    pub final_models: Vec<LayeredModel>,
    /// `pairwise_max_diff[i][j]`: largest absolute parameter gap between clients i and j.
    pub pairwise_max_diff: Vec<Vec<f64>>,
    pub ledger: TransmissionLedger,
    pub full_model_bytes: usize,
    pub wall_time_s: f64,
}

impl RunOutcome {
    /// Total-time model fed with the average measured per-round timings.
    pub fn predicted_total_time(&self, cfg: &FederationConfig) -> Result<f64> {
        let n = cfg.clients;
        let mut local = vec![0.0; n];
        let mut cluster = vec![0.0; n];
        let mut agg = 0.0;
        let agg_rounds = self.reports.iter().filter(|r| r.aggregated).count().max(1) as f64;
        for r in &self.reports {
            for c in &r.clients {
                local[c.client_id] += c.t_local_s / self.reports.len() as f64;
                if r.aggregated {
                    cluster[c.client_id] += c.t_cluster_s / agg_rounds;
                }
            }
            if r.aggregated {
                agg += r.t_agg_s / agg_rounds;
            }
        }
        let agg_every = if cfg.mode == Mode::NoAggregation {
            f64::INFINITY
        } else {
            cfg.agg_every as f64
        };
        predicted_total_time(&TimingModelInput {
            epochs: cfg.rounds as f64,
            agg_every,
            local_s: local,
            cluster_s: cluster,
            aggregate_s: agg,
        })
    }

    pub fn total_tx_bytes(&self) -> usize {
        self.reports.iter().map(RoundReport::tx_bytes).sum()
    }
}

struct ClientRound {
    round: u32,
    client: usize,
    pre: LayeredModel,
    post: LayeredModel,
    local_set: Option<CentroidSet>,
    clustering: Option<ModelClustering>,
    tx_bytes: usize,
    rx_bytes: usize,
    payload_bytes: usize,
    t_local: f64,
    t_cluster: f64,
}

struct ServerRound {
    round: u32,
    t_agg: f64,
}

enum Event {
    Client(Box<ClientRound>),
    Server(ServerRound),
    Ledger(TransmissionLedger),
    Failed { round: u32, error: Error },
}

fn recv(rx: &Receiver<Vec<u8>>, what: &str) -> Result<Vec<u8>> {
    rx.recv_timeout(CHANNEL_TIMEOUT).map_err(|e| match e {
        RecvTimeoutError::Timeout => Error::Transport(format!("timed out waiting for {what}")),
        RecvTimeoutError::Disconnected => Error::Transport(format!("{what}: peer hung up")),
    })
}

fn send(tx: &Sender<Vec<u8>>, bytes: Vec<u8>, what: &str) -> Result<()> {
    tx.send(bytes)
        .map_err(|_| Error::Transport(format!("{what}: peer hung up")))
}

struct ClientCtx<'a> {
    id: usize,
    cfg: &'a FederationConfig,
    trainer: &'a dyn LocalTrainer,
    shard: &'a Dataset,
    init: &'a LayeredModel,
    up: Sender<Vec<u8>>,
    down: Receiver<Vec<u8>>,
    events: Sender<Event>,
    round: u32,
}

impl ClientCtx<'_> {
    fn run(mut self) {
        if let Err(error) = self.run_inner() {
            let _ = self.events.send(Event::Failed {
                round: self.round,
                error,
            });
        }
    }

    fn run_inner(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let id32 = self.id as u32;
        let mut channel = None;
        if cfg.mode != Mode::NoAggregation {
            let client = AttestationClient::new(id32, cfg.secret.as_bytes(), cfg.seed);
            send(&self.up, client.request()?, "attestation request")?;
            let key = client.finish(&recv(&self.down, "attestation response")?)?;
            channel = Some(SealingChannel::new(key)?);
        }

        let mut model = self.init.clone();
        let mut anchor = model.clone();
        let mut partition = match (cfg.mode, cfg.partition) {
            (Mode::Centroid, PartitionPolicy::Fixed | PartitionPolicy::Warm) => {
                Some(do_clustering(&model, cfg.beta, cfg.seed, 0)?)
            }
            _ => None,
        };
        for round in 1..=cfg.rounds {
            self.round = round;
            let start = Instant::now();
            let trained = self.trainer.train(&model, self.shard, round)?;
            let t_local = start.elapsed().as_secs_f64();

            let mut msg = ClientRound {
                round,
                client: self.id,
                pre: trained.clone(),
                post: trained.clone(),
                local_set: None,
                clustering: None,
                tx_bytes: 0,
                rx_bytes: 0,
                payload_bytes: 0,
                t_local,
                t_cluster: 0.0,
            };

            if cfg.is_aggregation_round(round) {
                let channel = channel.as_mut().expect("attested before aggregating");
                let start = Instant::now();
                let (upload, clustering) = match cfg.mode {
                    Mode::Centroid => {
                        let mc = match (&partition, cfg.partition) {
                            (Some(prev), PartitionPolicy::Fixed) => refit(&trained, prev)?,
                            (Some(prev), _) => recluster(&trained, prev)?,
                            (None, _) => do_clustering(&trained, cfg.beta, cfg.seed, round)?,
                        };
                        if partition.is_some() {
                            partition = Some(mc.clone());
                        }
                        (CentroidSet::from_clustering(&mc), Some(mc))
                    }
                    Mode::FedAvg => (CentroidSet::new(trained.layers().to_vec())?, None),
                    Mode::DpFedAvg => {
                        let dp = cfg.dp.as_ref().expect("validated");
                        let private = privatize_update(&anchor, &trained, dp, round, self.id)?;
                        (CentroidSet::new(private.into_layers())?, None)
                    }
                    Mode::NoAggregation => unreachable!(),
                };
                let mut t_cluster = start.elapsed().as_secs_f64();

                let meta = FrameMeta {
                    msg_type: MsgType::ClientCentroids,
                    client_id: id32,
                    round,
                };
                let frame = encode_frame(&upload, meta)?;
                let sealed =
                    channel.seal(&frame, frame_nonce(id32, round, Direction::ClientToServer))?;
                msg.tx_bytes = sealed.len();
                msg.payload_bytes = upload.value_count() * crate::model::VALUE_BYTES;
                send(&self.up, sealed, "centroid upload")?;

                let reply = recv(&self.down, "global centroids")?;
                msg.rx_bytes = reply.len();
                let (meta, global) = decode_frame(&channel.unseal(&reply)?)?;
                if meta.msg_type != MsgType::GlobalCentroids
                    || meta.round != round
                    || meta.client_id != id32
                {
                    return Err(Error::ProtocolViolation(format!(
                        "unexpected {:?} for client {} round {}",
                        meta.msg_type, meta.client_id, meta.round
                    )));
                }

                let start = Instant::now();
                let next = match &clustering {
                    Some(mc) => {
                        let diff = compute_difference(&global, &upload)?;
                        estimate_global_model(&trained, &diff, mc)?
                    }
                    None => LayeredModel::new(global.into_layers())?,
                };
                t_cluster += start.elapsed().as_secs_f64();
                if next.shapes() != trained.shapes() {
                    return Err(Error::ProtocolViolation(
                        "global model changed shape".into(),
                    ));
                }
                msg.t_cluster = t_cluster;
                msg.post = next.clone();
                if cfg.mode == Mode::Centroid {
                    msg.local_set = Some(upload);
                }
                msg.clustering = clustering;
                model = next;
                anchor = model.clone();
            } else {
                model = trained;
            }

            if self.events.send(Event::Client(Box::new(msg))).is_err() {
                return Ok(());
            }
        }
        Ok(())
    }
}

struct ServerCtx<'a> {
    cfg: &'a FederationConfig,
    ups: Vec<Receiver<Vec<u8>>>,
    downs: Vec<Sender<Vec<u8>>>,
    events: Sender<Event>,
    ledger: TransmissionLedger,
    round: u32,
}

impl ServerCtx<'_> {
    fn run(mut self) {
        let result = self.run_inner();
        let _ = self
            .events
            .send(Event::Ledger(std::mem::take(&mut self.ledger)));
        if let Err(error) = result {
            let _ = self.events.send(Event::Failed {
                round: self.round,
                error,
            });
        }
    }

    fn run_inner(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let n = cfg.clients;
        let mut attestation = AttestationServer::new(cfg.secret.as_bytes(), cfg.seed);
        let mut channels = Vec::with_capacity(n);
        for i in 0..n {
            let req = recv(&self.ups[i], "attestation request")?;
            let (resp, claimed, key) = attestation.respond(&req)?;
            if claimed as usize != i {
                return Err(Error::AttestationFailed(format!(
                    "channel {i} claims to be client {claimed}"
                )));
            }
            self.record(
                0,
                i,
                Direction::ClientToServer,
                req.len(),
                CentroidFrame::decode(&req)?,
            );
            self.record(
                0,
                i,
                Direction::ServerToClient,
                resp.len(),
                CentroidFrame::decode(&resp)?,
            );
            send(&self.downs[i], resp, "attestation response")?;
            channels.push(SealingChannel::new(key)?);
        }

        for round in (1..=cfg.rounds).filter(|&r| cfg.is_aggregation_round(r)) {
            self.round = round;
            let mut sets = Vec::with_capacity(n);
            // barrier: nothing is aggregated until every client has uploaded
            for (i, channel) in channels.iter_mut().enumerate() {
                let sealed = recv(&self.ups[i], "centroid upload")?;
                let plain = channel.unseal(&sealed)?;
                let frame = CentroidFrame::decode(&plain)?;
                let meta = frame.meta;
                if meta.msg_type != MsgType::ClientCentroids
                    || meta.round != round
                    || meta.client_id as usize != i
                {
                    return Err(Error::ProtocolViolation(format!(
                        "channel {i} sent {:?} from client {} for round {}",
                        meta.msg_type, meta.client_id, meta.round
                    )));
                }
                self.record(
                    round,
                    i,
                    Direction::ClientToServer,
                    sealed.len(),
                    frame.clone(),
                );
                sets.push(frame.into_set()?);
            }

            let start = Instant::now();
            let global = aggregate_centroids(&sets, n)?;
            let t_agg = start.elapsed().as_secs_f64();

            for (i, channel) in channels.iter_mut().enumerate() {
                let meta = FrameMeta {
                    msg_type: MsgType::GlobalCentroids,
                    client_id: i as u32,
                    round,
                };
                let frame = CentroidFrame::from_set(&global, meta)?;
                let sealed = channel.seal(
                    &frame.encode()?,
                    frame_nonce(i as u32, round, Direction::ServerToClient),
                )?;
                self.record(round, i, Direction::ServerToClient, sealed.len(), frame);
                send(&self.downs[i], sealed, "global centroids")?;
            }
            if self
                .events
                .send(Event::Server(ServerRound { round, t_agg }))
                .is_err()
            {
                return Ok(());
            }
        }
        Ok(())
    }

    fn record(
        &mut self,
        round: u32,
        client: usize,
        direction: Direction,
        wire: usize,
        frame: CentroidFrame,
    ) {
        self.ledger.record(LedgerEntry {
            round,
            client_id: client as u32,
            direction,
            msg_type: frame.meta.msg_type,
            wire_bytes: wire,
            payload_value_bytes: frame.payload_value_bytes(),
            shapes: frame.layers.iter().map(|l| (l.rows, l.cols)).collect(),
        });
    }
}

/// Runs `cfg.rounds` rounds of the configured mode over `data`.
pub fn run_federation(cfg: &FederationConfig, data: &FederatedData) -> Result<RunOutcome> {
    cfg.validate()?;
    let n = cfg.clients;
    if data.shards.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} data shards for {n} clients",
            data.shards.len()
        )));
    }
    let dim = data
        .test
        .input_dim()
        .ok_or_else(|| Error::InvalidArgument("empty held-out set".into()))?;
    let init = init_mlp(&cfg.widths(dim), cfg.seed)?;
    let trainer = cfg.trainer.build()?;
    let wall = Instant::now();

    let (event_tx, event_rx) = mpsc::channel();
    let mut ups_rx = Vec::with_capacity(n);
    let mut downs_tx = Vec::with_capacity(n);
    let mut client_ends = Vec::with_capacity(n);
    for _ in 0..n {
        let (up_tx, up_rx) = mpsc::channel();
        let (down_tx, down_rx) = mpsc::channel();
        ups_rx.push(up_rx);
        downs_tx.push(down_tx);
        client_ends.push((up_tx, down_rx));
    }

    let mut client_rounds: BTreeMap<(u32, usize), ClientRound> = BTreeMap::new();
    let mut server_rounds: BTreeMap<u32, f64> = BTreeMap::new();
    let mut failures: Vec<(u32, Error)> = Vec::new();
    let mut ledger = TransmissionLedger::new();

    std::thread::scope(|s| {
        if cfg.mode != Mode::NoAggregation {
            let server = ServerCtx {
                cfg,
                ups: ups_rx,
                downs: downs_tx,
                events: event_tx.clone(),
                ledger: TransmissionLedger::new(),
                round: 0,
            };
            s.spawn(move || server.run());
        } else {
            drop((ups_rx, downs_tx));
        }
        for (id, (up, down)) in client_ends.into_iter().enumerate() {
            let ctx = ClientCtx {
                id,
                cfg,
                trainer: trainer.as_ref(),
                shard: &data.shards[id],
                init: &init,
                up,
                down,
                events: event_tx.clone(),
                round: 0,
            };
            s.spawn(move || ctx.run());
        }
        drop(event_tx);
        for ev in event_rx {
            match ev {
                Event::Client(c) => {
                    client_rounds.insert((c.round, c.client), *c);
                }
                Event::Server(sr) => {
                    server_rounds.insert(sr.round, sr.t_agg);
                }
                Event::Ledger(l) => ledger.extend(l),
                Event::Failed { round, error } => failures.push((round, error)),
            }
        }
    });

    if !failures.is_empty() {
        // hang-ups are usually a consequence of the real failure elsewhere
        failures.sort_by_key(|(round, e)| (*round, matches!(e, Error::Transport(_))));
        let (round, error) = failures.swap_remove(0);
        return Err(error.in_round(round));
    }

    let mut reports = Vec::with_capacity(cfg.rounds as usize);
    let mut final_models = vec![init.clone(); n];
    for round in 1..=cfg.rounds {
        let rows: Vec<ClientRound> = (0..n)
            .map(|c| {
                client_rounds.remove(&(round, c)).ok_or_else(|| {
                    Error::Transport(format!("client {c} never reported")).in_round(round)
                })
            })
            .collect::<Result<_>>()?;
        let aggregated = cfg.is_aggregation_round(round);

        let clients = rows
            .iter()
            .map(|r| {
                Ok(ClientRoundMetrics {
                    client_id: r.client,
                    eval_loss: eval_loss(&r.post, &data.test)?,
                    tx_bytes: r.tx_bytes,
                    rx_bytes: r.rx_bytes,
                    payload_bytes: r.payload_bytes,
                    t_local_s: r.t_local,
                    t_cluster_s: r.t_cluster,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.in_round(round))?;
        if let Some(bad) = clients.iter().find(|c| !c.eval_loss.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "client {} has non-finite loss",
                bad.client_id
            ))
            .in_round(round));
        }

        let pres: Vec<LayeredModel> = rows.iter().map(|r| r.pre.clone()).collect();
        let posts: Vec<LayeredModel> = rows.iter().map(|r| r.post.clone()).collect();
        let (mut error, mut mean_gap, mut agreement) = (None, None, None);
        if aggregated {
            let reference = fedavg(&pres)?;
            mean_gap = Some(fedavg(&posts)?.max_abs_diff(&reference)?);
            if cfg.mode == Mode::Centroid {
                let sets: Vec<CentroidSet> = rows
                    .iter()
                    .map(|r| r.local_set.clone().expect("centroid mode"))
                    .collect();
                error = Some(approximation_error(&posts, &pres, &sets)?);
                let base = rows[0].clustering.as_ref().expect("centroid mode");
                let mut worst = 1.0f64;
                for r in &rows[1..] {
                    worst = worst.min(membership_agreement(base, r.clustering.as_ref().unwrap())?);
                }
                agreement = Some(worst);
            }
        }
        reports.push(RoundReport {
            round,
            aggregated,
            clients,
            t_agg_s: server_rounds.get(&round).copied().unwrap_or(0.0),
            error,
            mean_gap,
            membership_agreement: agreement,
        });
        final_models = posts;
    }

    let pairwise_max_diff = final_models
        .iter()
        .map(|a| {
            final_models
                .iter()
                .map(|b| a.max_abs_diff(b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    Ok(RunOutcome {
        reports,
        full_model_bytes: model_byte_size(&init),
        final_models,
        pairwise_max_diff,
        ledger,
        wall_time_s: wall.elapsed().as_secs_f64(),
    })
}

/// DP-FedAvg baseline: clipped, noised model deltas averaged by the server.
pub fn run_dp_fedavg(cfg: &FederationConfig, data: &FederatedData) -> Result<RunOutcome> {
    if cfg.dp.is_none() {
        return Err(Error::InvalidArgument("dp-fedavg needs a dp config".into()));
    }
    let cfg = FederationConfig {
        mode: Mode::DpFedAvg,
        ..cfg.clone()
    };
    run_federation(&cfg, data)
}
