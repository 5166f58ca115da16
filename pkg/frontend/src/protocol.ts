import { z } from "zod";

/**
 * Numbers on the wire. JSON cannot express non-finite doubles, so those
 * travel as tagged objects; finite doubles rely on shortest round-trip
 * decimal on both sides, which keeps them bit-identical through the pipe.
 */
export type WireNumber = number | { readonly $num: "inf" | "-inf" | "nan" };

export const wireNumber = z.union([
  z.number(),
  z.strictObject({ $num: z.enum(["inf", "-inf", "nan"]) }),
]);

export function encodeNumber(value: number): WireNumber {
  if (Number.isFinite(value)) return value;
  if (value === Infinity) return { $num: "inf" };
  if (value === -Infinity) return { $num: "-inf" };
  return { $num: "nan" };
}

export function decodeNumber(value: WireNumber): number {
  if (typeof value === "number") return value;
  switch (value.$num) {
    case "inf":
      return Infinity;
    case "-inf":
      return -Infinity;
    default:
      return NaN;
  }
}

/** Messages the solver process may send, one JSON line each. */
const evalRequest = z.object({
  op: z.literal("eval"),
  kind: z.enum(["fun", "cub", "ceq"]),
  x: z.array(wireNumber),
});

const solveResult = z.object({
  op: z.literal("result"),
  result: z.object({
    x: z.array(wireNumber),
    status: z.string(),
    message: z.string(),
    fun: wireNumber,
    jac: z.array(wireNumber),
    nfev: z.number().int().nonnegative(),
    nit: z.number().int().nonnegative(),
    maxcv: wireNumber,
  }),
});

const solveFailed = z.object({
  op: z.literal("failed"),
  kind: z.enum(["callback", "core"]),
  type: z.string().optional(),
  message: z.string(),
});

export const workerMessage = z.discriminatedUnion("op", [
  evalRequest,
  solveResult,
  solveFailed,
]);

export type WorkerMessage = z.infer<typeof workerMessage>;

/** The single request the host sends to start a solve. */
export interface SolveRequest {
  readonly op: "solve";
  readonly x0: WireNumber[];
  readonly xl?: WireNumber[];
  readonly xu?: WireNumber[];
  readonly aub?: WireNumber[][];
  readonly bub?: WireNumber[];
  readonly aeq?: WireNumber[][];
  readonly beq?: WireNumber[];
  readonly has_cub: boolean;
  readonly has_ceq: boolean;
  readonly options: Record<string, WireNumber | boolean>;
}
