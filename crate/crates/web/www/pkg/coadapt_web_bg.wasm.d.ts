/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_trial_free: (a: number, b: number) => void;
export const equilibria: (a: number, b: number) => [number, number, number, number];
export const simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: bigint, h: number) => [number, number, number, number];
export const trial_done: (a: number) => number;
export const trial_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const trial_record_json: (a: number, b: number, c: number) => [number, number];
export const trial_sample_hz: (a: number) => number;
export const trial_tick: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
