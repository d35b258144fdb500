/** Response shapes mirrored from the service's /api/v1 endpoints. */

export interface SubmitRunResponse {
  run_id: string;
}

export interface RunSummary {
  run_id: string;
  status: string;
  mode: string | null;
  fix_iterations: number;
  total_attempts: number;
  failed_section: string | null;
  error: string | null;
  warnings: Array<Record<string, unknown>>;
  intermediate_script: string | null;
  analysis: Record<string, unknown> | null;
  input_form: string | null;
  input_content: string | null;
  resume_count: number;
}

export interface IssueView {
  code: string;
  message: string;
  locus?: string;
}

export interface VerdictView {
  layer: string;
  passed: boolean;
  issues: IssueView[];
  warnings: IssueView[];
}

export interface HintView {
  pattern: string;
  cause: string;
  suggested_fix: string;
}

export interface RepairView {
  section: string;
  attempt: number;
  failed_layer: string;
  issues: IssueView[];
  matched_hints: HintView[];
}

export interface AttemptView {
  epoch: number;
  attempt: number;
  prompt_digest: string;
  reply_digest: string;
  block_labels: string[];
  verdicts: VerdictView[];
  accepted: boolean;
  review_skipped: boolean;
  provider_error: string | null;
  repair: RepairView | null;
}

export interface SectionView {
  section: string;
  pruned: boolean;
  reason: string | null;
  contract: Record<string, unknown> | null;
  attempts: AttemptView[];
  accepted_fragment: string | null;
  failing: boolean;
}

export interface SectionsResponse {
  run_id: string;
  status: string;
  sections: SectionView[];
  failed_section: string | null;
}

export interface ProgramResponse {
  run_id: string;
  status: string;
  program: string | null;
}

export interface OutputFile {
  name: string;
  content_type: string;
  rows: string[][] | null;
  href: string;
}

export interface BaselineFile {
  name: string;
  content_type: string;
  rows: string[][] | null;
  href: string | null;
}

export interface OutputsResponse {
  run_id: string;
  status: string;
  outputs: OutputFile[];
  baseline: BaselineFile | null;
}

export interface DatasetInfo {
  name: string;
  uri: string;
  role: string | null;
  pixel_type: string | null;
  crs: string | null;
}

export interface DatasetsResponse {
  datasets: DatasetInfo[];
  baselines: string[];
}

export interface ModesResponse {
  modes: string[];
  default_text_mode: string;
  default_script_mode: string;
}

export interface RunListResponse {
  runs: Array<{ run_id: string; status: string; mode: string | null }>;
}
