/* tslint:disable */
/* eslint-disable */

/**
 * Runs both bound checks on `draws` random MDP pairs; returns JSON with
 * one point per draw and check.
 */
export function bound_checks(draws: number, states: number, gamma: number, seed: number): string;

/**
 * Two Gaussian clouds of `n` points, the second shifted by `(shift, 0)`
 * and scaled by `spread_ratio`, with their energy distance.
 */
export function energy_demo(n: number, shift: number, spread_ratio: number, seed: number): string;

/**
 * Label `exp(-alpha * gap)` and coefficient `(v_hat - kappa * gap) / v_hat`
 * sampled at `n` gaps in `[0, max_gap]`.
 */
export function label_curves(alpha: number, v_hat: number, gamma: number, max_gap: number, n: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bound_checks: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly energy_demo: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly label_curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
