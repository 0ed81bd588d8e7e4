/**
 * runner.ts — process plumbing between the kernel namespace and the CLI.
 *
 * Every kernel call follows the same shape: write the inputs as .npy files
 * into a scratch directory, invoke one CLI subcommand synchronously, then
 * read the outputs back. The CLI prints a single JSON summary line on
 * stdout; anything on stderr belongs to a failure.
 */

import { spawnSync } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { TensorView } from "./arrayview.js";
import { decodeNpy, encodeNpy } from "./npy.js";

// 256 MiB: comfortably above any tensor the boundary accepts.
const MAX_STDIO = 256 * 1024 * 1024;

/** Raised when the CLI process exits with a nonzero status. */
export class CliError extends Error {
  readonly exitCode: number;
  readonly stderr: string;

  constructor(message: string, exitCode: number, stderr: string) {
    super(message);
    this.name = "CliError";
    this.exitCode = exitCode;
    this.stderr = stderr;
  }
}

/** Summary record printed by every successful CLI invocation. */
export interface CliSummary {
  command: string;
  inputs: string[];
  outputs: string[];
  stats: Record<string, unknown>;
  elapsed_ms: number;
}

/**
 * Resolve the CLI entry point. Defaults to the `evidfuse` console script
 * on PATH; set EVIDFUSE_BIN to point somewhere else.
 */
export function cliBinary(): string {
  return process.env["EVIDFUSE_BIN"] ?? "evidfuse";
}

/**
 * Run one CLI subcommand and return its parsed summary.
 *
 * The summary is the last non-empty stdout line; earlier lines (epoch
 * records from training, for example) are ignored here.
 */
export function runCli(args: readonly string[]): CliSummary {
  const result = spawnSync(cliBinary(), args, {
    encoding: "utf8",
    maxBuffer: MAX_STDIO,
  });
  if (result.error !== undefined) {
    throw new CliError(
      `failed to launch ${cliBinary()}: ${result.error.message}`,
      -1,
      "",
    );
  }
  const stderr = result.stderr ?? "";
  if (result.status !== 0) {
    const detail = stderr.trim().split("\n").pop() ?? "";
    throw new CliError(
      `${cliBinary()} ${args[0] ?? ""} exited with status ${result.status}: ${detail}`,
      result.status ?? -1,
      stderr,
    );
  }
  const lines = (result.stdout ?? "").trim().split("\n");
  const last = lines[lines.length - 1];
  if (last === undefined || last === "") {
    throw new CliError("CLI produced no summary line", -1, stderr);
  }
  return JSON.parse(last) as CliSummary;
}

/** Create a scratch directory, hand it to `fn`, and always clean it up. */
export function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "evidfuse-"));
  try {
    return fn(dir);
  } finally {
    fs.rmSync(dir, { recursive: true, force: true });
  }
}

/** Serialize a tensor to `filePath` in .npy form. */
export function writeTensor(filePath: string, view: TensorView): void {
  fs.writeFileSync(filePath, encodeNpy(view));
}

/** Read a .npy file back into a validated tensor view. */
export function readTensor(filePath: string): TensorView {
  return decodeNpy(new Uint8Array(fs.readFileSync(filePath)));
}
