void f05(int n, double **A, double *x, double *y)
{
    int i, j;
#pragma omp parallel for private(j)
    for (i = 0; i < n; i++)
        for (j = 0; j < n; j++)
            x[i] = x[i] + A[i][j] * y[j];
}
