//! Case-study programs and transcripts shared by the integration tests.
#![allow(dead_code)]

use coverify::suite::{TestCase, TestSuite};

pub const SQUARE_SERIAL_C: &str = r#"void squareSerial(float *d_in, float *d_out, int N) {
  for (unsigned int i = 0; i < N; ++i) {
    d_out[i] = pow(d_in[i] / (d_in[i] - 2.3), 3);
  }
}"#;

pub const SQUARE_KERNEL_CUDA: &str = r#"__global__ void squareKernel(float *d_in, float *d_out, int N) {
  const unsigned int lid = threadIdx.x;
  const unsigned int gid = blockIdx.x * blockDim.x + lid;
  if (gid < N) {
    d_out[gid] = pow(d_in[gid] / (d_in[gid] - 2.3), 3);
  }
}"#;

pub const SQUARE_KERNEL_WRAPPER: &str = r#"void squareKernel_cuda_invoke_in_cpp(float *d_in, float *d_out, int N) {
  float *a;
  float *b;
  cudaMalloc((void**)&a, N * sizeof(float));
  cudaMalloc((void**)&b, N * sizeof(float));
  cudaMemcpy(a, d_in, N * sizeof(float), cudaMemcpyHostToDevice);
  squareKernel<<<(N + 255) / 256, 256>>>(a, b, N);
  cudaMemcpy(d_out, b, N * sizeof(float), cudaMemcpyDeviceToHost);
  cudaFree(a);
  cudaFree(b);
}"#;

// The competing translation keeps the source name and single precision.
pub const SQUARE_SERIAL_POWF_CUDA: &str = r#"__global__ void squareSerial(float *d_in, float *d_out, int N) {
  int idx = blockIdx.x * blockDim.x + threadIdx.x;
  if (idx < N) {
    d_out[idx] = powf(d_in[idx] / (d_in[idx] - 2.3f), 3.0f);
  }
}"#;

pub const SQUARE_SERIAL_POWF_WRAPPER: &str = r#"void squareSerial_cuda_invoke_in_cpp(float *d_in, float *d_out, int N) {
  float *a;
  float *b;
  cudaMalloc((void**)&a, N * sizeof(float));
  cudaMalloc((void**)&b, N * sizeof(float));
  cudaMemcpy(a, d_in, N * sizeof(float), cudaMemcpyHostToDevice);
  squareSerial<<<(N + 255) / 256, 256>>>(a, b, N);
  cudaMemcpy(d_out, b, N * sizeof(float), cudaMemcpyDeviceToHost);
  cudaFree(a);
  cudaFree(b);
}"#;

pub const SQUARE_INPUT2: &str = "float d_in3[] = {2.3f};\nfloat d_out3[1];\nwrapper(squareSerial, d_in3, d_out3, 1);";
pub const SQUARE_C_OUTPUT2: &str =
    "Return value: void Arguments after function call: ([ 2.3 ], [ -1.12221e+23 ], 1)";
pub const SQUARE_O1_OUTPUT2: &str = "Return value: void Arguments after function call: ([ 2.3 ], [ inf ], 1)";

pub const CROSS_CORRELATE_C: &str = r#"void cpu_cross_correlate(float *Isg, float *Iss, float *sp, float *gp, int npml, int nnz, int nnx) {
  for (int i1 = npml; i1 < nnz - npml; i1++) {
    for (int i2 = npml; i2 < nnx - npml; i2++) {
      int id = i1 + i2 * nnz;
      float ps = sp[id];
      float pg = gp[id];
      Isg[id] += ps * pg;
      Iss[id] += ps * ps;
    }
  }
}"#;

pub const CROSS_CORRELATE_CUDA: &str = r#"__global__ void cuda_cross_correlate(float *Isg, float *Iss, float *sp, float *gp, int npml, int nnz, int nnx) {
  int i1 = threadIdx.x + blockDim.x * blockIdx.x;
  int i2 = threadIdx.y + blockDim.y * blockIdx.y;
  int id = i1 + i2 * nnz;
  if (i1 >= npml && i1 < nnz - npml && i2 >= npml && i2 < nnx - npml) {
    float ps = sp[id];
    float pg = gp[id];
    Isg[id] += ps * pg;
    Iss[id] += ps * ps;
  }
}"#;

pub const CROSS_CORRELATE_BOUNDLESS_CUDA: &str = r#"__global__ void gpu_cross_correlate(float *Isg, float *Iss, float *sp, float *gp, int npml, int nnz, int nnx) {
  int i1 = blockIdx.x * blockDim.x + threadIdx.x;
  int i2 = blockIdx.y * blockDim.y + threadIdx.y;
  if (i1 < nnz - npml && i2 < nnx - npml) {
    int id = i1 + i2 * nnz;
    float ps = sp[id];
    float pg = gp[id];
    Isg[id] += ps * pg;
    Iss[id] += ps * ps;
  }
}"#;

pub fn cross_correlate_wrapper(kernel: &str) -> String {
    format!(
        r#"void {kernel}_cuda_invoke_in_cpp(float *Isg, float *Iss, float *sp, float *gp, int npml, int nnz, int nnx) {{
  int n = nnz * nnx;
  float *d_Isg, *d_Iss, *d_sp, *d_gp;
  cudaMalloc((void**)&d_Isg, n * sizeof(float));
  cudaMalloc((void**)&d_Iss, n * sizeof(float));
  cudaMalloc((void**)&d_sp, n * sizeof(float));
  cudaMalloc((void**)&d_gp, n * sizeof(float));
  cudaMemcpy(d_Isg, Isg, n * sizeof(float), cudaMemcpyHostToDevice);
  cudaMemcpy(d_Iss, Iss, n * sizeof(float), cudaMemcpyHostToDevice);
  cudaMemcpy(d_sp, sp, n * sizeof(float), cudaMemcpyHostToDevice);
  cudaMemcpy(d_gp, gp, n * sizeof(float), cudaMemcpyHostToDevice);
  dim3 block(16, 16);
  dim3 grid((nnz + 15) / 16, (nnx + 15) / 16);
  {kernel}<<<grid, block>>>(d_Isg, d_Iss, d_sp, d_gp, npml, nnz, nnx);
  cudaMemcpy(Isg, d_Isg, n * sizeof(float), cudaMemcpyDeviceToHost);
  cudaMemcpy(Iss, d_Iss, n * sizeof(float), cudaMemcpyDeviceToHost);
  cudaFree(d_Isg);
  cudaFree(d_Iss);
  cudaFree(d_sp);
  cudaFree(d_gp);
}}"#
    )
}

pub const CROSS_INPUT1: &str = "const int npml1 = 1;
const int nnz1 = 3;
const int nnx1 = 3;
float Isg1[nnz1 * nnx1] = {0};
float Iss1[nnz1 * nnx1] = {0};
float sp1[nnz1 * nnx1] = {0.5, 0.7, 0.6, 0.8, 1, 0.9, 0.3, 0.2, 0.4};
float gp1[nnz1 * nnx1] = {1, 0.8, 0.9, 0.7, 1, 0.6, 0.4, 0.3, 0.5};
wrapper(cpu_cross_correlate, Isg1, Iss1, sp1, gp1, npml1, nnz1, nnx1);";
pub const CROSS_C_OUTPUT1: &str = "Return value: void Arguments after function call: ([ 0, 0, 0, 0, 1, 0, 0, 0, 0 ], [ 0, 0, 0, 0, 1, 0, 0, 0, 0 ], [ 0.5, 0.7, 0.6, 0.8, 1, 0.9, 0.3, 0.2, 0.4 ], [ 1, 0.8, 0.9, 0.7, 1, 0.6, 0.4, 0.3, 0.5 ], 1, 3, 3)";
pub const CROSS_BOUNDLESS_OUTPUT1: &str = "Return value: void Arguments after function call: ([ 0.5, 0.56, 0, 0.56, 1, 0, 0, 0, 0 ], [ 0.25, 0.49, 0, 0.64, 1, 0, 0, 0, 0 ], [ 0.5, 0.7, 0.6, 0.8, 1, 0.9, 0.3, 0.2, 0.4 ], [ 1, 0.8, 0.9, 0.7, 1, 0.6, 0.4, 0.3, 0.5 ], 1, 3, 3)";

pub const BOXES_C: &str = r#"void boxesScale_cpu(const float *input, float *output, int dims, float scale0, float scale1, float scale2, float scale3) {
  for (int tid = 0; tid < dims; tid++) {
    output[tid * 4] = input[tid * 4] / scale0;
    output[tid * 4 + 1] = input[tid * 4 + 1] / scale1;
    output[tid * 4 + 2] = input[tid * 4 + 2] / scale2;
    output[tid * 4 + 3] = input[tid * 4 + 3] / scale3;
  }
}"#;

pub const BOXES_CUDA: &str = r#"__global__ void boxesScale_kernel(const float *input, float *output, int dims, float scale0, float scale1, float scale2, float scale3) {
  int tid = blockIdx.x * blockDim.x + threadIdx.x;
  if (tid >= dims) {
    return;
  }
  output[tid * 4] = input[tid * 4] / scale0;
  output[tid * 4 + 1] = input[tid * 4 + 1] / scale1;
  output[tid * 4 + 2] = input[tid * 4 + 2] / scale2;
  output[tid * 4 + 3] = input[tid * 4 + 3] / scale3;
}"#;

pub const BOXES_TEMPLATE_CUDA: &str = r#"__global__ void boxesScale_gpu(const T *input, T *output, int dims, T scale0, T scale1, T scale2, T scale3) {
  int tid = blockIdx.x * blockDim.x + threadIdx.x;
  if (tid < dims) {
    output[tid * 4] = input[tid * 4] / scale0;
    output[tid * 4 + 1] = input[tid * 4 + 1] / scale1;
    output[tid * 4 + 2] = input[tid * 4 + 2] / scale2;
    output[tid * 4 + 3] = input[tid * 4 + 3] / scale3;
  }
}"#;

pub fn boxes_wrapper(kernel: &str, ty: &str) -> String {
    format!(
        r#"void {kernel}_cuda_invoke_in_cpp(const {ty} *input, {ty} *output, int dims, {ty} scale0, {ty} scale1, {ty} scale2, {ty} scale3) {{
  {ty} *d_in;
  {ty} *d_out;
  cudaMalloc((void**)&d_in, dims * 4 * sizeof({ty}));
  cudaMalloc((void**)&d_out, dims * 4 * sizeof({ty}));
  cudaMemcpy(d_in, input, dims * 4 * sizeof({ty}), cudaMemcpyHostToDevice);
  {kernel}<<<(dims + 255) / 256, 256>>>(d_in, d_out, dims, scale0, scale1, scale2, scale3);
  cudaMemcpy(output, d_out, dims * 4 * sizeof({ty}), cudaMemcpyDeviceToHost);
  cudaFree(d_in);
  cudaFree(d_out);
}}"#
    )
}

pub const BOXES_INPUT1: &str =
    "float input3[] = {1, 2, 3, 4, 5, 6, 7, 8};\nfloat output3[8];\nwrapper(boxesScale_cpu, input3, output3, 2, 1, 2, 3, 4);";
pub const BOXES_C_OUTPUT1: &str = "Return value: void Arguments after function call: ([ 1, 2, 3, 4, 5, 6, 7, 8 ], [ 1, 1, 1, 1, 5, 3, 2.33333, 2 ], 2, 1, 2, 3, 4)";
pub const BOXES_TEMPLATE_DIAGNOSTIC: &str = "Compilation Error: identifier \"T\" is undefined";

pub const GEMM_C: &str = r#"void device_gemm(double * __restrict__ A, double * __restrict__ B, double * __restrict__ C, double alpha, double beta, int M, int N, int K, bool A_T = false, bool B_T = false) {
    for (int i = 0; i < M; i++) {
        for (int j = 0; j < N; j++) {
            double temp = 0;
            for (int k = 0; k < K; k++) {
                double left = A_T ? A[k + i * K] : A[i + k * M];
                double right = B_T ? B[j + k * N] : B[k + j * K];
                temp += left * right;
            }
            C[i + j * M] = alpha * temp + beta * C[i + j * M];
        }
    }
}"#;

pub const GEMM_CUDA: &str = r#"__global__ void device_gemm(double * __restrict__ A, double * __restrict__ B, double * __restrict__ C, double alpha, double beta, int M, int N, int K, bool A_T = false, bool B_T = false) {
    int j = blockIdx.x * blockDim.x + threadIdx.x;
    int i = blockIdx.y * blockDim.y + threadIdx.y;
    if ((i < M) && (j < N)) {
        double temp = 0;
        for (int k = 0; k < K; k++) {
            double left = A_T ? A[k + i * K] : A[i + k * M];
            double right = B_T ? B[j + k * N] : B[k + j * K];
            temp += left * right;
        }
        C[i + j * M] = alpha * temp + beta * C[i + j * M];
    }
}"#;

pub const GEMM_WRAPPER: &str = r#"void device_gemm_cuda_invoke_in_cpp(double *A, double *B, double *C, double alpha, double beta, int M, int N, int K, bool A_T = false, bool B_T = false) {
    double *d_A, *d_B, *d_C;
    cudaMalloc((void**)&d_A, M * K * sizeof(double));
    cudaMalloc((void**)&d_B, K * N * sizeof(double));
    cudaMalloc((void**)&d_C, M * N * sizeof(double));
    cudaMemcpy(d_A, A, M * K * sizeof(double), cudaMemcpyHostToDevice);
    cudaMemcpy(d_B, B, K * N * sizeof(double), cudaMemcpyHostToDevice);
    cudaMemcpy(d_C, C, M * N * sizeof(double), cudaMemcpyHostToDevice);
    dim3 block(16, 16);
    dim3 grid((N + 15) / 16, (M + 15) / 16);
    device_gemm<<<grid, block>>>(d_A, d_B, d_C, alpha, beta, M, N, K, A_T, B_T);
    cudaMemcpy(C, d_C, M * N * sizeof(double), cudaMemcpyDeviceToHost);
    cudaFree(d_A);
    cudaFree(d_B);
    cudaFree(d_C);
}"#;

pub const GEMM_INPUTS: &[&str] = &[
    "double A[] = {1, 2, 3, 4, 5, 6};\ndouble B[] = {1, 0, 2, 1, 0, 3};\ndouble C[] = {1, 1, 1, 1};\nwrapper(device_gemm, A, B, C, 1.5, 0.5, 2, 2, 3);",
    "double A[] = {1, 2, 3, 4};\ndouble B[] = {0.5, -1, 2, 0.25};\ndouble C[] = {0, 0, 0, 0};\nwrapper(device_gemm, A, B, C, 1.0, 0.0, 2, 2, 2, true, true);",
    "double A[] = {0.1, 0.2, 0.3};\ndouble B[] = {10, 20, 30};\ndouble C[] = {1, 2, 3, 4, 5, 6, 7, 8, 9};\nwrapper(device_gemm, A, B, C, 2.0, -1.0, 3, 3, 1);",
];

pub const TRANSPOSE_C: &str = r#"void device_transpose(double * data, double * result, int M, int N) {
    int i, j;
    for (i = 0; i < M; i++) {
        for (j = 0; j < N; j++) {
            result[j + i * N] = data[i + j * M];
        }
    }
    return;
}"#;

pub const TRANSPOSE_CUDA: &str = r#"__global__ void device_transpose(double * data, double * result, int M, int N) {
    int i = blockIdx.y * blockDim.y + threadIdx.y;
    int j = blockIdx.x * blockDim.x + threadIdx.x;
    if ((i < M) && (j < N)) {
        result[j + i * N] = data[i + j * M];
    }
    return;
}"#;

pub const TRANSPOSE_WRAPPER: &str = r#"void device_transpose_cuda_invoke_in_cpp(double *data, double *result, int M, int N) {
    double *d_data, *d_result;
    cudaMalloc((void**)&d_data, M * N * sizeof(double));
    cudaMalloc((void**)&d_result, M * N * sizeof(double));
    cudaMemcpy(d_data, data, M * N * sizeof(double), cudaMemcpyHostToDevice);
    dim3 block(16, 16);
    dim3 grid((N + 15) / 16, (M + 15) / 16);
    device_transpose<<<grid, block>>>(d_data, d_result, M, N);
    cudaMemcpy(result, d_result, M * N * sizeof(double), cudaMemcpyDeviceToHost);
    cudaFree(d_data);
    cudaFree(d_result);
}"#;

pub const TRANSPOSE_INPUTS: &[&str] = &[
    "double data[] = {1, 2, 3, 4, 5, 6};\ndouble result[6] = {0};\nwrapper(device_transpose, data, result, 2, 3);",
    "double data[] = {1.5, -2.5, 3.25, 4};\ndouble result[4] = {0};\nwrapper(device_transpose, data, result, 2, 2);",
    "double data[] = {7};\ndouble result[1] = {0};\nwrapper(device_transpose, data, result, 1, 1);",
];

pub const ADD_100_C: &str = r#"void add_100(int numElements, int *data) {
    for (int idx = 0; idx < numElements; idx++) {
        data[idx] += 100;
    }
}"#;

pub const ADD_100_KERNEL: &str = r#"__global__ void add_100_kernel(int numElements, int* data) {
    int idx = blockIdx.x * blockDim.x + threadIdx.x;
    if (idx < numElements) {
        data[idx] += 100;
    }
}"#;

pub const ADD_100_WRAPPER: &str = r#"void add_100_cuda_invoke_in_cpp(int numElements, int* data) {
    int* d_data;
    cudaMalloc((void**)&d_data, numElements * sizeof(int));
    cudaMemcpy(d_data, data, numElements * sizeof(int), cudaMemcpyHostToDevice);
    add_100_kernel<<<numElements, 1>>>(numElements, d_data);
    cudaMemcpy(data, d_data, numElements * sizeof(int), cudaMemcpyDeviceToHost);
    cudaFree(d_data);
}"#;

/// The tester one-shot answer for add_100, braces already unescaped.
pub const ADD_100_TESTS: &str = "//Input case 1:
int data1[] = {0};
add_100(1, data1);

//Input case 2:
int data2[] = {-100};
add_100(1, data2);

//Input case 3:
int data3[] = {1, 2, 3};
add_100(3, data3);

//Input case 4:
int data4[] = {INT_MAX - 100};
add_100(1, data4);

//Input case 5:
int data5[] = {-50, 0, 50};
add_100(3, data5);";

pub const TRANSPOSE_NAIVE_CUDA: &str = r#"__global__ void transposeNaive(int* vector , int* transposed, int size){
    int column = threadIdx.x + blockDim.x * blockIdx.x;
    int row = threadIdx.y + blockDim.x * blockIdx.y;
    if(row < size && column < size)
        transposed[row + column * size] = vector[column + row * size];
}"#;

pub const TRANSPOSE_NAIVE_WRAPPER: &str = r#"void transposeNaive_cuda_invoke_in_cpp(int* vector, int* transposed, int size){
    int* d_vector;
    int* d_transposed;
    cudaMalloc((void**)&d_vector, size * size * sizeof(int));
    cudaMalloc((void**)&d_transposed, size * size * sizeof(int));
    cudaMemcpy(d_vector, vector, size * size * sizeof(int), cudaMemcpyHostToDevice);
    dim3 numBlocks((size + 15) / 16, (size + 15) / 16);
    dim3 blockSize(16, 16);
    transposeNaive<<<numBlocks, blockSize>>>(d_vector, d_transposed, size);
    cudaMemcpy(transposed, d_transposed, size * size * sizeof(int), cudaMemcpyDeviceToHost);
    cudaFree(d_vector);
    cudaFree(d_transposed);
}"#;

pub const TRANSPOSE_NAIVE_TEST2: &str =
    "int vector2[] = {1, 2, 3, 4, 5, 6, 7, 8};\nint transposed2[4]; // Runtime Error\nwrapper(transposeNaive_invoke_in_cpp, vector2, transposed2, 4);";

/// Wrap records in harness case delimiters.
pub fn transcript(records: &[&str]) -> String {
    let mut s = String::new();
    for (i, r) in records.iter().enumerate() {
        s.push_str(&format!("=== CASE {} ===\n{r}\n=== END {} ===\n", i + 1, i + 1));
    }
    s
}

pub fn suite_of(function_id: &str, function_name: &str, snippets: &[&str]) -> TestSuite {
    TestSuite {
        function_id: function_id.to_string(),
        function_name: function_name.to_string(),
        cases: snippets
            .iter()
            .enumerate()
            .map(|(i, s)| TestCase { index: i + 1, snippet: s.to_string() })
            .collect(),
    }
}

pub fn have_gxx() -> bool {
    std::process::Command::new("g++")
        .arg("--version")
        .output()
        .is_ok_and(|o| o.status.success())
}
