// Optional dependency, loaded dynamically by the real encoder; install it
// with `npm install @xenova/transformers` to run non-mock exports.
declare module "@xenova/transformers";
