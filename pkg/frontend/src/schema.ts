/**
 * Results-file schema: the contract with the evaluation harness.
 *
 * Readers fail fast when a header does not match the expected columns
 * verbatim, so schema drift between the two packages cannot pass silently.
 */

import * as fs from "node:fs";
import * as path from "node:path";

export const RESULTS_COLUMNS = [
  "env", "algo", "welfare_p1", "welfare_p2", "pair_type", "seed_a", "seed_b",
  "v1", "v2", "normalized_score", "convention_p1", "convention_p2",
] as const;

export const AGGREGATE_COLUMNS = [
  "env", "algo", "welfare_p1", "welfare_p2", "pair_type", "n",
  "mean_score", "stderr_score", "mean_v1", "stderr_v1", "mean_v2", "stderr_v2",
] as const;

export interface MatchRecord {
  env: string;
  algo: string;
  welfare_p1: string;
  welfare_p2: string;
  pair_type: string;
  seed_a: number;
  seed_b: number;
  v1: number;
  v2: number;
  normalized_score: number;
  convention_p1: string;
  convention_p2: string;
}

export interface AggregateCell {
  env: string;
  algo: string;
  welfare_p1: string;
  welfare_p2: string;
  pair_type: string;
  n: number;
  mean_score: number;
  stderr_score: number;
  mean_v1: number;
  stderr_v1: number;
  mean_v2: number;
  stderr_v2: number;
}

export interface ResultsManifest {
  value_convention?: string;
  disagreement_profile?: number[];
  feasible_polygon?: { hull: number[][]; pareto_front: number[][] };
  [key: string]: unknown;
}

export class SchemaError extends Error {}

function parseTable(filePath: string, expected: readonly string[]): string[][] {
  const text = fs.readFileSync(filePath, "utf8");
  const lines = text.split("\n").filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new SchemaError(`${filePath}: empty file`);
  }
  const header = lines[0].split("\t");
  if (header.length !== expected.length || header.some((h, i) => h !== expected[i])) {
    throw new SchemaError(
      `${filePath}: header mismatch\n  got:      ${header.join(",")}\n  expected: ${expected.join(",")}`);
  }
  return lines.slice(1).map((line) => line.split("\t"));
}

function num(cell: string, filePath: string, column: string): number {
  const v = Number(cell);
  if (!Number.isFinite(v)) {
    throw new SchemaError(`${filePath}: non-numeric value ${JSON.stringify(cell)} in ${column}`);
  }
  return v;
}

export function readResults(filePath: string): MatchRecord[] {
  return parseTable(filePath, RESULTS_COLUMNS).map((c) => ({
    env: c[0], algo: c[1], welfare_p1: c[2], welfare_p2: c[3], pair_type: c[4],
    seed_a: num(c[5], filePath, "seed_a"),
    seed_b: num(c[6], filePath, "seed_b"),
    v1: num(c[7], filePath, "v1"),
    v2: num(c[8], filePath, "v2"),
    normalized_score: num(c[9], filePath, "normalized_score"),
    convention_p1: c[10], convention_p2: c[11],
  }));
}

export function readAggregates(filePath: string): AggregateCell[] {
  return parseTable(filePath, AGGREGATE_COLUMNS).map((c) => ({
    env: c[0], algo: c[1], welfare_p1: c[2], welfare_p2: c[3], pair_type: c[4],
    n: num(c[5], filePath, "n"),
    mean_score: num(c[6], filePath, "mean_score"),
    stderr_score: num(c[7], filePath, "stderr_score"),
    mean_v1: num(c[8], filePath, "mean_v1"),
    stderr_v1: num(c[9], filePath, "stderr_v1"),
    mean_v2: num(c[10], filePath, "mean_v2"),
    stderr_v2: num(c[11], filePath, "stderr_v2"),
  }));
}

export function readManifest(filePath: string): ResultsManifest {
  return JSON.parse(fs.readFileSync(filePath, "utf8")) as ResultsManifest;
}

export interface ResultsBundle {
  records: MatchRecord[];
  aggregates: AggregateCell[];
  manifest: ResultsManifest;
}

/** Load a results directory (results.tsv, aggregates.tsv, results_manifest.json). */
export function loadResultsDir(dir: string): ResultsBundle {
  const records = readResults(path.join(dir, "results.tsv"));
  const aggregates = readAggregates(path.join(dir, "aggregates.tsv"));
  const manifestPath = path.join(dir, "results_manifest.json");
  const manifest = fs.existsSync(manifestPath) ? readManifest(manifestPath) : {};
  return { records, aggregates, manifest };
}
