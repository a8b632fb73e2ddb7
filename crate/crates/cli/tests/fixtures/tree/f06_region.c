double f06(int n, double *a)
{
    int i;
    double sum = 0.0;
#pragma omp parallel for reduction(+:sum)
    for (i = 0; i < n; i++)
        sum += a[i];
#pragma omp parallel
    {
#pragma omp for
        for (i = 0; i < n; i++)
            a[i] = a[i] * sum;
    }
    return sum;
}
