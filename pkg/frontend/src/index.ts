/**
 * TypeScript bindings for the dfosqp derivative-free optimizer.
 *
 * Each {@link minimize} call spawns one Python solver process and drives it
 * over a JSON-lines pipe: the solver asks for objective and constraint
 * values one evaluation at a time, and the host answers from the supplied
 * callbacks. Concurrent solves are independent processes.
 */

import { spawn } from "node:child_process";
import { createInterface } from "node:readline";
import { fileURLToPath } from "node:url";

import {
  decodeNumber,
  encodeNumber,
  workerMessage,
  type SolveRequest,
  type WireNumber,
} from "./protocol.js";

/** Objective callback: receives a point, returns f(x). */
export type Objective = (x: number[]) => number;

/**
 * Constraint callback: receives a point, returns the residual values
 * (a scalar is treated as a one-element vector).
 */
export type Constraint = (x: number[]) => number[] | number;

/** Solver options; omitted entries use dimension-based defaults. */
export interface Options {
  /** Initial trust-region radius (default 1). */
  readonly rhobeg?: number;
  /** Final trust-region radius, the stopping granularity (default 1e-6). */
  readonly rhoend?: number;
  /** Number of interpolation points (default 2n + 1). */
  readonly npt?: number;
  /** Maximum number of objective evaluations (default 500n). */
  readonly maxfev?: number;
  /** Maximum number of iterations (default 1000n). */
  readonly maxiter?: number;
  /** Stop once a feasible point with f(x) <= target is evaluated. */
  readonly target?: number;
  /** Print solver progress (to the solver process's stderr). */
  readonly disp?: boolean;
  /** Enable internal consistency checks during the solve. */
  readonly debug?: boolean;
}

/** Constraints and tuning for one {@link minimize} call. */
export interface ProblemSpec {
  /** Lower variable bounds, length n (-Infinity entries allowed). */
  readonly xl?: readonly number[];
  /** Upper variable bounds, length n (Infinity entries allowed). */
  readonly xu?: readonly number[];
  /** Linear inequality matrix: Aub x <= bub, rows of length n. */
  readonly Aub?: readonly (readonly number[])[];
  /** Linear inequality right-hand side, one entry per Aub row. */
  readonly bub?: readonly number[];
  /** Linear equality matrix: Aeq x = beq, rows of length n. */
  readonly Aeq?: readonly (readonly number[])[];
  /** Linear equality right-hand side, one entry per Aeq row. */
  readonly beq?: readonly number[];
  /** Nonlinear inequality callback: cub(x) <= 0 componentwise. */
  readonly cub?: Constraint;
  /** Nonlinear equality callback: ceq(x) = 0 componentwise. */
  readonly ceq?: Constraint;
  readonly options?: Options;
  /** Python interpreter running the solver (default "python3"). */
  readonly python?: string;
}

/** Mirror of the solver's result structure, field for field. */
export interface MinimizeResult {
  /** Best point evaluated (feasibility first, then objective value). */
  readonly x: number[];
  /** Why the solve stopped (e.g. "radius-target", "maxfev", "target-reached"). */
  readonly status: string;
  /** Human-readable form of the status. */
  readonly message: string;
  /** Objective value at x. */
  readonly fun: number;
  /** Gradient of the objective model at x. */
  readonly jac: number[];
  /** Number of objective evaluations performed. */
  readonly nfev: number;
  /** Number of trust-region iterations performed. */
  readonly nit: number;
  /** Maximum constraint violation at x (0 when unconstrained). */
  readonly maxcv: number;
}

/** Invalid inputs, rejected before the solver process starts. */
export class BindingError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BindingError";
  }
}

/** A user callback threw; the solve was aborted. */
export class CallbackError extends Error {
  readonly status = "callback-error";

  constructor(message: string, cause?: Error) {
    super(message, cause === undefined ? undefined : { cause });
    this.name = "CallbackError";
  }
}

/** The solver itself reported a failure (bad option values, ...). */
export class SolverError extends Error {
  /** Solver-side error class name, e.g. "ConfigurationError". */
  readonly type: string;

  constructor(type: string, message: string) {
    super(message);
    this.name = "SolverError";
    this.type = type;
  }
}

const OPTION_KEYS = new Set([
  "rhobeg", "rhoend", "npt", "maxfev", "maxiter", "target", "disp", "debug",
]);

function numericVector(name: string, value: readonly number[], n: number,
                       allowInfinite: boolean): WireNumber[] {
  if (!Array.isArray(value) || value.length !== n
      || !value.every((v) => typeof v === "number" && !Number.isNaN(v)
                             && (allowInfinite || Number.isFinite(v)))) {
    const kind = allowInfinite ? "numbers" : "finite numbers";
    throw new BindingError(`${name} must be an array of ${n} ${kind}`);
  }
  return value.map(encodeNumber);
}

function linearSystem(matName: string, rhsName: string,
                      mat: readonly (readonly number[])[] | undefined,
                      rhs: readonly number[] | undefined,
                      n: number): [WireNumber[][]?, WireNumber[]?] {
  if (mat === undefined && rhs === undefined) return [undefined, undefined];
  if (mat === undefined || rhs === undefined) {
    throw new BindingError(
      `${matName} and ${rhsName} must be supplied together`);
  }
  if (!Array.isArray(mat)) {
    throw new BindingError(`${matName} must be an array of rows`);
  }
  const rows = mat.map((row, i) =>
    numericVector(`${matName}[${i}]`, row, n, false));
  return [rows, numericVector(rhsName, rhs, rows.length, false)];
}

function buildRequest(fun: Objective, x0: readonly number[],
                      spec: ProblemSpec): SolveRequest {
  if (typeof fun !== "function") {
    throw new BindingError("objective must be callable");
  }
  if (!Array.isArray(x0) || x0.length === 0
      || !x0.every((v) => typeof v === "number" && Number.isFinite(v))) {
    throw new BindingError("x0 must be a non-empty array of finite numbers");
  }
  const n = x0.length;
  for (const [name, cb] of [["cub", spec.cub], ["ceq", spec.ceq]] as const) {
    if (cb !== undefined && typeof cb !== "function") {
      throw new BindingError(`${name} must be callable`);
    }
  }
  const options: Record<string, WireNumber | boolean> = {};
  for (const [key, value] of Object.entries(spec.options ?? {})) {
    if (!OPTION_KEYS.has(key)) {
      throw new BindingError(`unknown option "${key}"`);
    }
    if (value !== undefined) {
      options[key] = typeof value === "boolean" ? value : encodeNumber(value);
    }
  }
  const [aub, bub] = linearSystem("Aub", "bub", spec.Aub, spec.bub, n);
  const [aeq, beq] = linearSystem("Aeq", "beq", spec.Aeq, spec.beq, n);
  return {
    op: "solve",
    x0: x0.map(encodeNumber),
    xl: spec.xl === undefined
      ? undefined : numericVector("xl", spec.xl, n, true),
    xu: spec.xu === undefined
      ? undefined : numericVector("xu", spec.xu, n, true),
    aub, bub, aeq, beq,
    has_cub: spec.cub !== undefined,
    has_ceq: spec.ceq !== undefined,
    options,
  };
}

function workerPath(): string {
  return fileURLToPath(new URL("../python/worker.py", import.meta.url));
}

function asVector(name: string, value: number[] | number): number[] {
  const values = typeof value === "number" ? [value] : value;
  if (!Array.isArray(values)
      || !values.every((v) => typeof v === "number")) {
    throw new TypeError(`${name} must return a number or an array of them`);
  }
  return values;
}

/**
 * Minimize a black-box objective, optionally under bound, linear, and
 * nonlinear constraints. No derivatives are requested; every point handed
 * to a callback satisfies the bounds exactly.
 *
 * Rejects with {@link BindingError} for malformed inputs (before any
 * solver process is started), {@link CallbackError} when a callback
 * throws mid-solve, and {@link SolverError} when the solver reports a
 * failure such as invalid option values.
 */
export async function minimize(fun: Objective, x0: readonly number[],
                               spec: ProblemSpec = {},
                               ): Promise<MinimizeResult> {
  const request = buildRequest(fun, x0, spec);
  return new Promise((resolve, reject) => {
    const child = spawn(spec.python ?? "python3", [workerPath()],
                        { stdio: ["pipe", "pipe", "pipe"] });
    const stderr: string[] = [];
    child.stderr.on("data", (chunk) => stderr.push(String(chunk)));
    const lines = createInterface({ input: child.stdout });
    let settled = false;
    let callbackFailure: Error | undefined;

    const fail = (error: Error) => {
      if (!settled) {
        settled = true;
        reject(error);
      }
      lines.close();
      child.kill();
    };
    const done = (result: MinimizeResult) => {
      if (!settled) {
        settled = true;
        resolve(result);
      }
      lines.close();
      child.stdin.end();
    };
    const send = (message: unknown) => {
      child.stdin.write(`${JSON.stringify(message)}\n`);
    };

    child.on("error", (error) => {
      fail(new BindingError(`could not start the solver process: `
                            + error.message));
    });
    child.on("close", (code) => {
      if (!settled) {
        fail(new BindingError(`solver process exited with code ${code} `
                              + `before producing a result: `
                              + stderr.join("").trim()));
      }
    });

    lines.on("line", (line) => {
      let raw: unknown;
      try {
        raw = JSON.parse(line);
      } catch {
        fail(new BindingError(`unrecognized solver message: ${line}`));
        return;
      }
      const parsed = workerMessage.safeParse(raw);
      if (!parsed.success) {
        fail(new BindingError(`unrecognized solver message: ${line}`));
        return;
      }
      const message = parsed.data;
      if (message.op === "eval") {
        const x = message.x.map(decodeNumber);
        let values: number[];
        try {
          if (message.kind === "fun") {
            const f = fun(x);
            if (typeof f !== "number") {
              throw new TypeError("objective must return a number");
            }
            values = [f];
          } else {
            const cb = message.kind === "cub" ? spec.cub : spec.ceq;
            values = asVector(message.kind, cb!(x));
          }
        } catch (error) {
          callbackFailure =
            error instanceof Error ? error : new Error(String(error));
          send({ op: "abort", message: callbackFailure.message });
          return;
        }
        send({
          op: "value",
          value: message.kind === "fun"
            ? encodeNumber(values[0]) : values.map(encodeNumber),
        });
      } else if (message.op === "result") {
        const r = message.result;
        done({
          x: r.x.map(decodeNumber),
          status: r.status,
          message: r.message,
          fun: decodeNumber(r.fun),
          jac: r.jac.map(decodeNumber),
          nfev: r.nfev,
          nit: r.nit,
          maxcv: decodeNumber(r.maxcv),
        });
      } else if (message.kind === "callback") {
        fail(new CallbackError(
          `callback failed: ${message.message}`, callbackFailure));
      } else {
        fail(new SolverError(message.type ?? "Error", message.message));
      }
    });

    send(request);
  });
}
