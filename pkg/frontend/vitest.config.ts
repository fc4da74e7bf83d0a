import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    // the integration suite trains nothing but does spawn a real server
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
