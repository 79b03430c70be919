// API payload shapes. The server versions every response with schema_version;
// the console treats anything else as a protocol error.

export interface Versioned {
  schema_version: number;
}

export interface ConceptRefRaw {
  concept: string;
  kind?: string;
  resolved?: string;
}

export type ConceptRef = string | ConceptRefRaw;

export interface FieldSpec {
  name: string;
  concept: string;
  unit?: string;
}

export interface SharedFunction {
  id: string;
  name: string;
  inputs: string[];
  outputs: string[];
  annotation: { capability: ConceptRef[]; inputs?: ConceptRef[]; outputs?: ConceptRef[] };
}

export interface Partner {
  id: string;
  name: string;
  functions: SharedFunction[];
}

export interface CollaborationModel {
  schema_version: number;
  network_id: string;
  name: string;
  sub_networks: { id: string; name: string; partners: string[] }[];
  partners: Partner[];
  objectives: {
    id: string;
    kind: string;
    description: string;
    sub_network: string;
    annotation: ConceptRef[];
  }[];
  messages: { id: string; name: string; concept: ConceptRef; fields: FieldSpec[] }[];
}

export interface ValidationFinding {
  path: string;
  rule: string;
  message: string;
}

export interface Binding {
  services: string[];
  score: number;
  coverage: Record<string, string>;
  source: string;
}

export interface MatchResult {
  activity: string;
  status: string;
  chosen: Binding | null;
  candidates: Binding[];
}

export interface InstanceSummary {
  id: string;
  workflow: string;
  state: string;
  waiting_node: string | null;
}

export interface InstanceDetail extends InstanceSummary {
  history: { seq: number; kind: string; node: string; detail: string }[];
  env: Record<string, Record<string, unknown>>;
}

export interface DistanceReport {
  per_category: Record<string, number>;
  total: number;
  dominant: string | null;
  threshold: number;
  verdict: boolean;
}

export interface TwinHistoryEntry {
  event: string;
  applied: string[];
  report: DistanceReport;
}

export interface AdaptationProposal {
  report: DistanceReport;
  re_entry: string;
}

export interface AdaptationRecord {
  re_entry: string;
  interrupted: string[];
  old_workflows: string[];
  new_workflows: string[];
  state: string;
  error: string | null;
}

export interface StageReport {
  schema_version: number;
  stage: string;
  status: string;
  details: Record<string, unknown>;
}

export interface EventInput {
  id: string;
  source: "field" | "monitoring";
  type: string;
  subject: string;
  attributes: Record<string, unknown>;
  timestamp: number;
}
