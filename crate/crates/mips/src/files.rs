//! On-disk JSON schemas: requests, workloads, clusters, graphs, placements,
//! oracle outputs, and experiment summaries. Every file carries a
//! `schema_version` field.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{ExperimentResult, MetricSummary, RequestMetrics};
use crate::model::{
    AppRequest, ClusterState, CsmpAssignment, IcmpAssignment, ResourceVector, Server, StreamEdge,
};
use crate::topology::{NetworkGraph, TopologyParams};

pub const SCHEMA_VERSION: u32 = 1;

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "{what} has schema_version {found}, this build reads {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// Requests and workloads
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub parallelism: usize,
    /// Demand per instance of this component: [cores, memory GB].
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub src: usize,
    pub dst: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub count: usize,
    pub capacity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestFile {
    pub schema_version: u32,
    pub id: usize,
    pub components: Vec<ComponentSpec>,
    pub edges: Vec<EdgeSpec>,
    pub containers: ContainerSpec,
}

impl RequestFile {
    pub fn from_request(req: &AppRequest) -> Result<Self> {
        let mut components = Vec::with_capacity(req.components.len());
        for c in &req.components {
            let mut demands = req
                .instances
                .iter()
                .filter(|i| i.component == c.id)
                .map(|i| &i.demand);
            let first = demands
                .next()
                .ok_or_else(|| {
                    Error::InvalidRequest(format!("component {} has no instances", c.id))
                })?
                .clone();
            if demands.any(|d| *d != first) {
                return Err(Error::InvalidRequest(format!(
                    "component {} mixes instance demands; the file format keeps one demand \
                     per component",
                    c.id
                )));
            }
            components.push(ComponentSpec {
                parallelism: c.parallelism,
                demand: first.as_slice().to_vec(),
            });
        }
        let capacity = req
            .container_capacity()
            .map(|c| c.as_slice().to_vec())
            .unwrap_or_default();
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            id: req.id,
            components,
            edges: req
                .edges
                .iter()
                .map(|e| EdgeSpec {
                    src: e.src,
                    dst: e.dst,
                    rate: e.rate,
                })
                .collect(),
            containers: ContainerSpec {
                count: req.containers.len(),
                capacity,
            },
        })
    }

    pub fn into_request(self) -> Result<AppRequest> {
        check_version(self.schema_version, "request file")?;
        AppRequest::expand(
            self.id,
            self.components
                .into_iter()
                .map(|c| Ok((c.parallelism, ResourceVector::new(c.demand)?)))
                .collect::<Result<_>>()?,
            self.edges
                .into_iter()
                .map(|e| StreamEdge {
                    src: e.src,
                    dst: e.dst,
                    rate: e.rate,
                })
                .collect(),
            self.containers.count,
            ResourceVector::new(self.containers.capacity)?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFile {
    pub schema_version: u32,
    pub requests: Vec<RequestFile>,
}

impl WorkloadFile {
    pub fn from_requests(requests: &[AppRequest]) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            requests: requests
                .iter()
                .map(RequestFile::from_request)
                .collect::<Result<_>>()?,
        })
    }

    pub fn into_requests(self) -> Result<Vec<AppRequest>> {
        check_version(self.schema_version, "workload file")?;
        self.requests
            .into_iter()
            .map(RequestFile::into_request)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Clusters and graphs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub id: usize,
    pub capacity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterFile {
    pub schema_version: u32,
    pub topology: TopologyParams,
    pub servers: Vec<ServerSpec>,
    pub hop_cost: Vec<Vec<f64>>,
}

impl ClusterFile {
    pub fn from_state(topology: TopologyParams, state: &ClusterState) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            topology,
            servers: state
                .servers
                .iter()
                .map(|s| ServerSpec {
                    id: s.id,
                    capacity: s.capacity.as_slice().to_vec(),
                })
                .collect(),
            hop_cost: state.hop_cost.clone(),
        }
    }

    pub fn into_state(self) -> Result<ClusterState> {
        check_version(self.schema_version, "cluster file")?;
        let servers = self
            .servers
            .into_iter()
            .map(|s| {
                Ok(Server {
                    id: s.id,
                    capacity: ResourceVector::new(s.capacity)?,
                })
            })
            .collect::<Result<_>>()?;
        ClusterState::new(servers, self.hop_cost)
    }
}

/// Adjacency export of a generated network, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub schema_version: u32,
    pub kind: String,
    pub server_count: usize,
    pub switch_count: usize,
    pub link_bandwidth_gbps: f64,
    /// Undirected links, each listed once. Servers occupy node ids
    /// `0..server_count`, switches the rest.
    pub links: Vec<(usize, usize)>,
}

impl GraphFile {
    pub fn from_graph(g: &NetworkGraph) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: g.kind.clone(),
            server_count: g.server_count,
            switch_count: g.switch_count,
            link_bandwidth_gbps: g.link_bandwidth_gbps,
            links: g.links(),
        }
    }
}

// ---------------------------------------------------------------------------
// Placements, oracle outputs, summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePlacement {
    pub instance: usize,
    pub container: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerPlacement {
    pub container: usize,
    pub server: usize,
}

pub fn icmp_entries(a: &IcmpAssignment) -> Vec<InstancePlacement> {
    a.placement
        .iter()
        .map(|(&instance, &container)| InstancePlacement {
            instance,
            container,
        })
        .collect()
}

pub fn csmp_entries(a: &CsmpAssignment) -> Vec<ContainerPlacement> {
    a.placement
        .iter()
        .map(|(&container, &server)| ContainerPlacement { container, server })
        .collect()
}

/// Output of the `place` subcommand: both mappings plus their costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementFile {
    pub schema_version: u32,
    pub request: usize,
    pub stage1: String,
    pub stage2: String,
    pub alpha: f64,
    pub seed: u64,
    pub icmp: Vec<InstancePlacement>,
    pub csmp: Vec<ContainerPlacement>,
    pub cross_container_traffic: f64,
    pub container_utilization: usize,
    pub icmp_objective: f64,
    pub cross_server_cost: f64,
}

impl PlacementFile {
    pub fn new(
        stage1: String,
        stage2: String,
        alpha: f64,
        seed: u64,
        metrics: &RequestMetrics,
    ) -> Result<Self> {
        let icmp = metrics
            .icmp
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("metrics carry no stage-one mapping".into()))?;
        let csmp = metrics
            .csmp
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("metrics carry no stage-two mapping".into()))?;
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            request: metrics.request,
            stage1,
            stage2,
            alpha,
            seed,
            icmp: icmp_entries(icmp),
            csmp: csmp_entries(csmp),
            cross_container_traffic: metrics.cross_container_traffic,
            container_utilization: metrics.container_utilization,
            icmp_objective: metrics.icmp_objective,
            cross_server_cost: metrics.cross_server_cost,
        })
    }
}

/// Output of the `oracle` subcommand: exhaustive optima for a small request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub schema_version: u32,
    pub request: usize,
    pub alpha: f64,
    pub icmp: Vec<InstancePlacement>,
    pub icmp_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csmp: Option<Vec<ContainerPlacement>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csmp_value: Option<f64>,
}

/// Per-grid-point summary block of the experiment/sweep JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_value: Option<f64>,
    pub repetitions: usize,
    pub requests: MetricSummary,
    pub rejections: MetricSummary,
    pub cross_container_traffic: MetricSummary,
    pub container_utilization: MetricSummary,
    pub icmp_objective: MetricSummary,
    pub cross_server_cost: MetricSummary,
}

impl GridSummary {
    pub fn from_result(grid_value: Option<f64>, result: &ExperimentResult) -> Self {
        let s = &result.summary;
        Self {
            grid_value,
            repetitions: s.repetitions,
            requests: s.requests,
            rejections: s.rejections,
            cross_container_traffic: s.cross_container_traffic,
            container_utilization: s.container_utilization,
            icmp_objective: s.icmp_objective,
            cross_server_cost: s.cross_server_cost,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_parameter: Option<String>,
    pub points: Vec<GridSummary>,
}
